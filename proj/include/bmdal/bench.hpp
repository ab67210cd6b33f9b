#pragma once

#include "bmdal/common.hpp"
#include "bmdal/model.hpp"
#include "bmdal/selection.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bmdal {

struct Dataset {
    std::string name;
    Mat X;
    Vec y;
    std::vector<std::string> feature_names;  // "col" or "col=value" for one-hot columns
    std::vector<std::string> source_columns;  // original column of each feature
};

// Rows containing "", NA, NaN, nan or ? are dropped, constant columns are
// removed and non-numeric columns are one-hot encoded in column order while
// at most 300 new columns are created; larger categoricals are discarded.
Dataset parse_csv(const std::string& text, const std::string& target_column,
                  const std::string& name = "csv");
Dataset load_csv(const std::filesystem::path& path, const std::string& target_column);

// Friedman #1: ten U(0,1) features, five informative. Labels are
// standardized over all rows unless raw_labels is set.
Dataset synthetic_friedman(int n, double noise_sd, std::uint64_t seed, bool raw_labels = false);

// "synthetic:friedman:n=<int>,noise=<float>" or a CSV path.
Dataset load_data(const std::string& source, const std::string& target_column,
                  std::uint64_t seed);

struct SplitConfig {
    int n_train_init = 256;
    int n_valid = 1024;
    double trainable_fraction = 0.8;  // train + valid + pool; the rest is test
    int max_trainable = 200000;
    std::uint64_t seed = 0;
};

struct Split {
    Indices train, valid, pool, test;
};

Split make_split(int n, const SplitConfig& cfg);

// Soft-clips features to (-5, 5) and standardizes labels, both with
// population statistics over train + pool.
Dataset preprocess(const Dataset& data, const Split& split);

std::filesystem::path default_cache_dir();
// Downloads over http(s) into cache_dir, named by the SHA-256 of the URL.
std::filesystem::path fetch_dataset(const std::string& url, const std::filesystem::path& cache_dir);
std::string sha256_hex(const std::string& data);

struct Metrics {
    double mae = 0, rmse = 0, q95 = 0, q99 = 0, maxe = 0;
    bool operator==(const Metrics&) const = default;
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"mae", "rmse", "q95", "q99", "maxe"};
    return names;
}
double metric_value(const Metrics& m, const std::string& name);

// Quantiles use linear interpolation between order statistics (h = (n-1) q).
Metrics compute_metrics(const Vec& predictions, const Vec& labels);
double quantile(std::vector<double> values, double q);

struct BmalRunConfig {
    std::string data = "synthetic:friedman:n=6600,noise=0.3";
    std::string target;
    std::string method = "random";
    std::string mode = "p";
    std::string kernel = "grad->rp(512)";
    double sigma2 = 1e-6;
    int init_train = 256;
    int valid = 1024;
    int n_batches = 16;
    int batch_size = 256;
    std::uint64_t seed = 0;
    std::string activation = "relu";
    std::vector<int> hidden{512, 512};
    int epochs = 256;

    bool operator==(const BmalRunConfig&) const = default;
};

struct StepRecord {
    int step = 0;
    int n_train = 0;
    Metrics metrics;
    double selection_seconds = 0;
    double train_seconds = 0;
    Indices batch;  // indices into the dataset rows
    std::string status = "ok";
    int random_filled = 0;

    bool operator==(const StepRecord&) const = default;
};

struct RunResult {
    std::string dataset;
    BmalRunConfig config;
    std::vector<StepRecord> steps;
    std::string version;

    bool operator==(const RunResult&) const = default;
};

std::string method_label(const BmalRunConfig& cfg);

RunResult run_bmal(const BmalRunConfig& cfg);
RunResult run_bmal(const BmalRunConfig& cfg, const Dataset& raw);

std::string to_json(const RunResult& r);
RunResult run_result_from_json(const std::string& text);
void save_result(const RunResult& r, const std::filesystem::path& path);
RunResult load_result(const std::filesystem::path& path);

struct CurvePoint {
    int step = 0;
    int n_train = 0;
    double mean_log = 0;
    std::optional<double> stderr_mean;  // empty with a single repetition
};

struct MethodSummary {
    std::string method;
    std::map<std::string, double> mean_log;  // averaged over steps 1..T
    int n_datasets = 0;
    int n_runs = 0;
};

struct ReportTable {
    // metric -> method -> curve
    std::map<std::string, std::map<std::string, std::vector<CurvePoint>>> curves;
    std::vector<MethodSummary> methods;
    // dataset -> initial-step mean log RMSE - mean log MAE
    std::map<std::string, double> predictor;
};

// Natural-log metrics averaged over repetitions, then datasets. The standard
// error combines per-dataset variances of the repetition mean.
ReportTable aggregate_log_means(const std::vector<RunResult>& results);
void emit_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir);

}  // namespace bmdal
