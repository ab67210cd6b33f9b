#include "bmdal/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace bmdal {

namespace {

std::vector<std::vector<std::string>> parse_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    std::size_t i = 0;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    while (i < text.size()) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                quoted = false;
            } else {
                field += ch;
            }
            ++i;
            continue;
        }
        if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == ',') {
            end_field();
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
        } else {
            field += ch;
        }
        any = true;
        ++i;
    }
    if (quoted) throw DataError("unterminated quoted field");
    if (any || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "?";
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    if (b != e && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

constexpr int kMaxOneHotColumns = 300;

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& target_column, const std::string& name) {
    auto rows = parse_rows(text);
    if (rows.empty()) throw DataError("CSV has no header");
    std::vector<std::string> header;
    for (auto& h : rows[0]) header.push_back(trim(h));
    const std::size_t ncol = header.size();

    std::size_t target = ncol - 1;
    if (!target_column.empty()) {
        auto it = std::find(header.begin(), header.end(), target_column);
        if (it == header.end()) throw DataError("target column '" + target_column + "' not found");
        target = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::vector<std::string>> body;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != ncol)
            throw DataError("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                            " fields, expected " + std::to_string(ncol));
        bool missing = false;
        for (auto& f : rows[r]) {
            f = trim(f);
            missing = missing || is_missing(f);
        }
        if (!missing) body.push_back(std::move(rows[r]));
    }
    if (body.empty()) throw DataError("no complete rows in CSV");
    const std::size_t n = body.size();

    std::vector<bool> numeric(ncol, true);
    std::vector<std::vector<double>> values(ncol, std::vector<double>(n));
    for (std::size_t c = 0; c < ncol; ++c)
        for (std::size_t r = 0; r < n && numeric[c]; ++r) numeric[c] = parse_double(body[r][c], values[c][r]);
    if (!numeric[target]) throw DataError("target column is not numeric");

    Dataset d;
    d.name = name;
    d.y = Eigen::Map<Vec>(values[target].data(), n);

    std::vector<Vec> cols;
    int onehot_used = 0;
    for (std::size_t c = 0; c < ncol; ++c) {
        if (c == target) continue;
        if (numeric[c]) {
            const auto [lo, hi] = std::minmax_element(values[c].begin(), values[c].end());
            if (*lo == *hi) continue;
            cols.push_back(Eigen::Map<Vec>(values[c].data(), n));
            d.feature_names.push_back(header[c]);
            d.source_columns.push_back(header[c]);
            continue;
        }
        std::set<std::string> cats;
        for (std::size_t r = 0; r < n; ++r) cats.insert(body[r][c]);
        if (cats.size() < 2) continue;
        if (onehot_used + static_cast<int>(cats.size()) > kMaxOneHotColumns) continue;
        onehot_used += static_cast<int>(cats.size());
        for (const auto& cat : cats) {
            Vec v(n);
            for (std::size_t r = 0; r < n; ++r) v[r] = body[r][c] == cat ? 1.0 : 0.0;
            cols.push_back(std::move(v));
            d.feature_names.push_back(header[c] + "=" + cat);
            d.source_columns.push_back(header[c]);
        }
    }
    if (cols.empty()) throw DataError("no usable feature columns");
    d.X.resize(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) d.X.col(j) = cols[j];
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), target_column, path.stem().string());
}

Dataset synthetic_friedman(int n, double noise_sd, std::uint64_t seed, bool raw_labels) {
    if (n < 2) throw ConfigError("friedman data needs at least two rows");
    if (!(noise_sd >= 0)) throw ConfigError("noise sd must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.name = "friedman";
    d.X.resize(n, 10);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 10; ++j) d.X(i, j) = unif(rng);
        const auto x = d.X.row(i);
        const double eps = normal(rng);
        d.y[i] = 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
                 10.0 * x[3] + 5.0 * x[4] + noise_sd * eps;
    }
    for (int j = 0; j < 10; ++j) {
        d.feature_names.push_back("x" + std::to_string(j + 1));
        d.source_columns.push_back(d.feature_names.back());
    }
    if (!raw_labels) {
        const double mu = d.y.mean();
        const double sd = std::sqrt((d.y.array() - mu).square().mean());
        d.y = (d.y.array() - mu) / sd;
    }
    return d;
}

Dataset load_data(const std::string& source, const std::string& target_column, std::uint64_t seed) {
    const std::string prefix = "synthetic:friedman:";
    if (source.rfind(prefix, 0) != 0) {
        if (source.rfind("http://", 0) == 0 || source.rfind("https://", 0) == 0)
            return load_csv(fetch_dataset(source, default_cache_dir()), target_column);
        return load_csv(source, target_column);
    }
    int n = 6600;
    double noise = 0.3;
    std::stringstream ss(source.substr(prefix.size()));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed synthetic data option '" + kv + "'");
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        try {
            if (key == "n") n = std::stoi(val);
            else if (key == "noise") noise = std::stod(val);
            else throw ConfigError("unknown synthetic data option '" + key + "'");
        } catch (const std::logic_error& e) {
            if (dynamic_cast<const ConfigError*>(&e)) throw;
            throw ConfigError("malformed synthetic data value '" + val + "'");
        }
    }
    return synthetic_friedman(n, noise, derive_seed(seed, "friedman"));
}

Split make_split(int n, const SplitConfig& cfg) {
    if (cfg.n_train_init < 1 || cfg.n_valid < 1) throw ConfigError("train and valid sizes must be positive");
    int trainable = std::min(static_cast<int>(std::floor(cfg.trainable_fraction * n + 1e-9)), cfg.max_trainable);
    if (cfg.n_train_init + cfg.n_valid > trainable)
        throw ConfigError("not enough rows for the initial train and validation sets");
    Indices perm = iota_indices(0, n);
    std::mt19937_64 rng(derive_seed(cfg.seed, "split"));
    std::shuffle(perm.begin(), perm.end(), rng);
    Split s;
    auto it = perm.begin();
    s.train.assign(it, it + cfg.n_train_init);
    it += cfg.n_train_init;
    s.valid.assign(it, it + cfg.n_valid);
    it += cfg.n_valid;
    s.pool.assign(it, perm.begin() + trainable);
    s.test.assign(perm.begin() + trainable, perm.end());
    return s;
}

Dataset preprocess(const Dataset& data, const Split& split) {
    const Indices tp = concat(split.train, split.pool);
    if (tp.empty()) throw ConfigError("empty train and pool sets");
    Dataset out = data;
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
        double mu = 0;
        for (int i : tp) mu += data.X(i, j);
        mu /= tp.size();
        double var = 0;
        for (int i : tp) var += (data.X(i, j) - mu) * (data.X(i, j) - mu);
        var /= tp.size();
        const double sd = std::sqrt(var);
        for (Eigen::Index i = 0; i < data.X.rows(); ++i)
            out.X(i, j) = sd > 0 ? 5.0 * std::tanh((data.X(i, j) - mu) / (5.0 * sd)) : 0.0;
    }
    double mu = 0;
    for (int i : tp) mu += data.y[i];
    mu /= tp.size();
    double var = 0;
    for (int i : tp) var += (data.y[i] - mu) * (data.y[i] - mu);
    var /= tp.size();
    if (!(var > 0)) throw DataError("labels are constant on train and pool");
    out.y = (data.y.array() - mu) / std::sqrt(var);
    return out;
}

}  // namespace bmdal
