#include "bmdal/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdint>
#include <iomanip>
#include <sstream>

namespace bmdal {

namespace {

// method -> dataset -> runs
using Grouped = std::map<std::string, std::map<std::string, std::vector<const RunResult*>>>;

Grouped group_runs(const std::vector<RunResult>& results) {
    Grouped g;
    for (const auto& r : results) g[method_label(r.config)][r.dataset].push_back(&r);
    return g;
}

double log_metric(const StepRecord& s, const std::string& metric) {
    const double v = metric_value(s.metrics, metric);
    if (!(v > 0)) throw DataError("metric " + metric + " is not positive; cannot take its log");
    return std::log(v);
}

// Mean over steps 1..T (step 0 does not depend on the method); a run without
// acquisitions falls back to its single step.
double run_mean_log(const RunResult& r, const std::string& metric) {
    double s = 0;
    int n = 0;
    for (const auto& st : r.steps)
        if (st.step >= 1 || r.steps.size() == 1) {
            s += log_metric(st, metric);
            ++n;
        }
    return s / n;
}

struct MeanVar {
    double mean = 0;
    double var_of_mean = 0;
    bool has_var = false;
};

MeanVar mean_and_var(const std::vector<double>& x) {
    MeanVar mv;
    for (double v : x) mv.mean += v;
    mv.mean /= x.size();
    if (x.size() >= 2) {
        double ss = 0;
        for (double v : x) ss += (v - mv.mean) * (v - mv.mean);
        mv.var_of_mean = ss / (x.size() - 1) / x.size();
        mv.has_var = true;
    }
    return mv;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

ReportTable aggregate_log_means(const std::vector<RunResult>& results) {
    ReportTable table;
    const Grouped groups = group_runs(results);

    for (const auto& metric : metric_names()) {
        for (const auto& [method, by_dataset] : groups) {
            std::size_t n_steps = SIZE_MAX;
            for (const auto& [ds, runs] : by_dataset)
                for (const RunResult* r : runs) n_steps = std::min(n_steps, r->steps.size());
            std::vector<CurvePoint> curve;
            for (std::size_t t = 0; t < n_steps; ++t) {
                CurvePoint cp;
                cp.step = static_cast<int>(t);
                cp.n_train = by_dataset.begin()->second.front()->steps[t].n_train;
                double mean = 0, var = 0;
                bool all_var = true;
                for (const auto& [ds, runs] : by_dataset) {
                    std::vector<double> x;
                    for (const RunResult* r : runs) x.push_back(log_metric(r->steps[t], metric));
                    const MeanVar mv = mean_and_var(x);
                    mean += mv.mean;
                    var += mv.var_of_mean;
                    all_var = all_var && mv.has_var;
                }
                const double J = static_cast<double>(by_dataset.size());
                cp.mean_log = mean / J;
                if (all_var) cp.stderr_mean = std::sqrt(var / (J * J));
                curve.push_back(cp);
            }
            table.curves[metric][method] = std::move(curve);
        }
    }

    for (const auto& [method, by_dataset] : groups) {
        MethodSummary ms;
        ms.method = method;
        ms.n_datasets = static_cast<int>(by_dataset.size());
        for (const auto& [ds, runs] : by_dataset) ms.n_runs += static_cast<int>(runs.size());
        for (const auto& metric : metric_names()) {
            double mean = 0;
            for (const auto& [ds, runs] : by_dataset) {
                double m = 0;
                for (const RunResult* r : runs) m += run_mean_log(*r, metric);
                mean += m / runs.size();
            }
            ms.mean_log[metric] = mean / by_dataset.size();
        }
        table.methods.push_back(std::move(ms));
    }

    std::map<std::string, std::pair<double, int>> pred;
    for (const auto& r : results) {
        if (r.steps.empty()) continue;
        auto& [sum, n] = pred[r.dataset];
        sum += log_metric(r.steps[0], "rmse") - log_metric(r.steps[0], "mae");
        ++n;
    }
    for (const auto& [ds, sn] : pred) table.predictor[ds] = sn.first / sn.second;
    return table;
}

void emit_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(results_dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no result files in " + results_dir.string());
    std::vector<RunResult> results;
    for (const auto& f : files) results.push_back(load_result(f));

    const ReportTable table = aggregate_log_means(results);
    std::filesystem::create_directories(out_dir);

    for (const auto& [metric, by_method] : table.curves) {
        std::ofstream out(out_dir / ("curves_" + metric + ".csv"));
        out << "method,step,n_train,mean_log,stderr\n";
        for (const auto& [method, curve] : by_method)
            for (const auto& cp : curve)
                out << csv_field(method) << ',' << cp.step << ',' << cp.n_train << ',' << fmt(cp.mean_log)
                    << ',' << (cp.stderr_mean ? fmt(*cp.stderr_mean) : "") << '\n';
    }
    {
        std::ofstream out(out_dir / "methods.csv");
        out << "method";
        for (const auto& m : metric_names()) out << ",mean_log_" << m;
        out << ",n_datasets,n_runs\n";
        for (const auto& ms : table.methods) {
            out << csv_field(ms.method);
            for (const auto& m : metric_names()) out << ',' << fmt(ms.mean_log.at(m));
            out << ',' << ms.n_datasets << ',' << ms.n_runs << '\n';
        }
    }
    {
        std::ofstream out(out_dir / "predictor.csv");
        out << "dataset,log_rmse_minus_log_mae\n";
        for (const auto& [ds, v] : table.predictor) out << csv_field(ds) << ',' << fmt(v) << '\n';
    }
}

}  // namespace bmdal
