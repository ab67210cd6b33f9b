#include "bmdal/bench.hpp"
#include "bmdal/kernels.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

namespace bmdal {

namespace {

constexpr const char* kVersion = "bmdal 0.1.0";

Mat rows_of(const Mat& X, const Indices& idx) { return X(idx, Eigen::all); }
Vec rows_of(const Vec& y, const Indices& idx) { return y(idx); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
auto with_step(int step, F&& f) {
    const std::string where = "step " + std::to_string(step) + ": ";
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + e.what());
    } catch (const UnsupportedError& e) {
        throw UnsupportedError(where + e.what());
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError(where + e.what(), e.epoch);
    }
}

}  // namespace

std::string method_label(const BmalRunConfig& cfg) {
    if (cfg.method == "random") return "random";
    return cfg.method + "-" + cfg.mode + ":" + cfg.kernel;
}

RunResult run_bmal(const BmalRunConfig& cfg) {
    return run_bmal(cfg, load_data(cfg.data, cfg.target, cfg.seed));
}

RunResult run_bmal(const BmalRunConfig& cfg, const Dataset& raw) {
    const Method method = parse_method(cfg.method);
    const Mode mode = parse_mode(cfg.mode);
    const KernelSpec spec = parse_kernel_spec(cfg.kernel);
    const Activation act = parse_activation(cfg.activation);
    if (cfg.n_batches < 0 || cfg.batch_size < 1) throw ConfigError("invalid batch list");
    if (cfg.epochs < 1) throw ConfigError("epochs must be positive");

    SplitConfig sc;
    sc.n_train_init = cfg.init_train;
    sc.n_valid = cfg.valid;
    sc.seed = cfg.seed;
    const Split split = make_split(static_cast<int>(raw.X.rows()), sc);
    if (static_cast<long long>(cfg.n_batches) * cfg.batch_size > static_cast<long long>(split.pool.size()))
        throw ConfigError("total batch size exceeds the pool size");
    const Dataset data = preprocess(raw, split);

    Indices train = split.train;
    Indices pool = split.pool;
    const Mat X_valid = rows_of(data.X, split.valid);
    const Vec y_valid = rows_of(data.y, split.valid);
    const Mat X_test = rows_of(data.X, split.test);
    const Vec y_test = rows_of(data.y, split.test);
    const int d_in = static_cast<int>(data.X.cols());

    RunResult result;
    result.dataset = raw.name;
    result.config = cfg;
    result.version = kVersion;

    const int n_models = spec.base == BaseKind::lin ? 1 : spec.ensemble_size();
    for (int step = 0; step <= cfg.n_batches; ++step) {
        StepRecord rec;
        rec.step = step;
        rec.n_train = static_cast<int>(train.size());
        const bool last = step == cfg.n_batches;
        const Mat X_train = rows_of(data.X, train);
        const Vec y_train = rows_of(data.y, train);

        auto t0 = std::chrono::steady_clock::now();
        std::vector<TrainedModel> models;
        with_step(step, [&] {
            for (int m = 0; m < (last ? 1 : n_models); ++m) {
                const auto idx = static_cast<std::uint64_t>(step) * 1000 + m;
                ModelConfig mc = ModelConfig::standard(d_in, cfg.hidden, act, derive_seed(cfg.seed, "init", idx));
                TrainConfig tc = TrainConfig::defaults(act);
                tc.epochs = cfg.epochs;
                tc.train_seed = derive_seed(cfg.seed, "train", idx);
                models.push_back(bmdal::train(init_network(mc), mc, tc, X_train, y_train, X_valid, y_valid));
            }
            return 0;
        });
        rec.train_seconds = seconds_since(t0);
        rec.metrics = compute_metrics(predict(models[0], X_test), y_test);

        if (!last) {
            t0 = std::chrono::steady_clock::now();
            GroundSet ground;
            const Indices ground_rows = concat(train, pool);
            ground.X = rows_of(data.X, ground_rows);
            ground.train = iota_indices(0, static_cast<int>(train.size()));
            ground.pool = iota_indices(static_cast<int>(train.size()), static_cast<int>(ground_rows.size()));

            SelectionResult sel = with_step(step, [&] {
                Kernel k;
                if (method == Method::random) {
                    k = base_linear(ground);
                } else {
                    KernelContext ctx;
                    ctx.ground = &ground;
                    for (const auto& m : models) ctx.models.push_back(&m);
                    ctx.train_labels = y_train;
                    ctx.train_predictions = predict(models[0], X_train);
                    ctx.seed = derive_seed(cfg.seed, "kernel", step);
                    k = build_kernel(spec, ctx);
                }
                SelectionRequest req;
                req.method = method;
                req.mode = mode;
                req.kernel = &k;
                req.train = ground.train;
                req.pool = ground.pool;
                req.n_batch = cfg.batch_size;
                req.sigma2 = cfg.sigma2;
                req.rng_seed = derive_seed(cfg.seed, "select", step);
                return select(req);
            });
            rec.selection_seconds = seconds_since(t0);
            rec.status = sel.status == SelectionStatus::ok ? "ok" : "random_filled";
            rec.random_filled = sel.random_filled;

            std::vector<bool> chosen(ground_rows.size(), false);
            for (int g : sel.batch) {
                rec.batch.push_back(ground_rows[g]);
                chosen[g] = true;
            }
            const std::size_t n_train_before = train.size();
            train.insert(train.end(), rec.batch.begin(), rec.batch.end());
            Indices rest;
            for (std::size_t j = n_train_before; j < ground_rows.size(); ++j)
                if (!chosen[j]) rest.push_back(ground_rows[j]);
            pool = std::move(rest);
        }
        result.steps.push_back(std::move(rec));
    }
    return result;
}

using ojson = nlohmann::ordered_json;

std::string to_json(const RunResult& r) {
    ojson j;
    j["version"] = r.version;
    j["dataset"] = r.dataset;
    const auto& c = r.config;
    j["config"] = {{"data", c.data},
                   {"target", c.target},
                   {"method", c.method},
                   {"mode", c.mode},
                   {"kernel", c.kernel},
                   {"sigma2", c.sigma2},
                   {"init_train", c.init_train},
                   {"valid", c.valid},
                   {"n_batches", c.n_batches},
                   {"batch_size", c.batch_size},
                   {"seed", c.seed},
                   {"activation", c.activation},
                   {"hidden", c.hidden},
                   {"epochs", c.epochs}};
    j["steps"] = ojson::array();
    for (const auto& s : r.steps) {
        ojson m = {{"mae", s.metrics.mae},
                   {"rmse", s.metrics.rmse},
                   {"q95", s.metrics.q95},
                   {"q99", s.metrics.q99},
                   {"maxe", s.metrics.maxe}};
        j["steps"].push_back({{"step", s.step},
                              {"n_train", s.n_train},
                              {"metrics", m},
                              {"selection_seconds", s.selection_seconds},
                              {"train_seconds", s.train_seconds},
                              {"batch", s.batch},
                              {"status", s.status},
                              {"random_filled", s.random_filled}});
    }
    return j.dump(2);
}

RunResult run_result_from_json(const std::string& text) {
    RunResult r;
    try {
        const ojson j = ojson::parse(text);
        r.version = j.at("version").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        const auto& c = j.at("config");
        auto& o = r.config;
        o.data = c.at("data").get<std::string>();
        o.target = c.at("target").get<std::string>();
        o.method = c.at("method").get<std::string>();
        o.mode = c.at("mode").get<std::string>();
        o.kernel = c.at("kernel").get<std::string>();
        o.sigma2 = c.at("sigma2").get<double>();
        o.init_train = c.at("init_train").get<int>();
        o.valid = c.at("valid").get<int>();
        o.n_batches = c.at("n_batches").get<int>();
        o.batch_size = c.at("batch_size").get<int>();
        o.seed = c.at("seed").get<std::uint64_t>();
        o.activation = c.at("activation").get<std::string>();
        o.hidden = c.at("hidden").get<std::vector<int>>();
        o.epochs = c.at("epochs").get<int>();
        for (const auto& s : j.at("steps")) {
            StepRecord rec;
            rec.step = s.at("step").get<int>();
            rec.n_train = s.at("n_train").get<int>();
            const auto& m = s.at("metrics");
            rec.metrics = {m.at("mae").get<double>(), m.at("rmse").get<double>(), m.at("q95").get<double>(),
                           m.at("q99").get<double>(), m.at("maxe").get<double>()};
            rec.selection_seconds = s.at("selection_seconds").get<double>();
            rec.train_seconds = s.at("train_seconds").get<double>();
            rec.batch = s.at("batch").get<Indices>();
            rec.status = s.at("status").get<std::string>();
            rec.random_filled = s.at("random_filled").get<int>();
            r.steps.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed result JSON: ") + e.what());
    }
    return r;
}

void save_result(const RunResult& r, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << to_json(r) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

RunResult load_result(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return run_result_from_json(ss.str());
}

}  // namespace bmdal
