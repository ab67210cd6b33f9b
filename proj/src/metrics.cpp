#include "bmdal/bench.hpp"

#include <algorithm>
#include <cmath>

namespace bmdal {

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ConfigError("quantile of an empty sample");
    if (!(q >= 0 && q <= 1)) throw ConfigError("quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = (values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

Metrics compute_metrics(const Vec& predictions, const Vec& labels) {
    if (predictions.size() != labels.size() || labels.size() == 0)
        throw ConfigError("predictions and labels must be non-empty and of equal length");
    const Vec e = (predictions - labels).cwiseAbs();
    std::vector<double> errs(e.data(), e.data() + e.size());
    Metrics m;
    m.mae = e.mean();
    m.rmse = std::sqrt(e.squaredNorm() / e.size());
    m.q95 = quantile(errs, 0.95);
    m.q99 = quantile(errs, 0.99);
    m.maxe = e.maxCoeff();
    return m;
}

double metric_value(const Metrics& m, const std::string& name) {
    if (name == "mae") return m.mae;
    if (name == "rmse") return m.rmse;
    if (name == "q95") return m.q95;
    if (name == "q99") return m.q99;
    if (name == "maxe") return m.maxe;
    throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace bmdal
