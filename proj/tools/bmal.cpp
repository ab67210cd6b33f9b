#include "bmdal/bench.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <regex>

namespace {

void parse_batches(const std::string& text, bmdal::BmalRunConfig& cfg) {
    static const std::regex re(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw CLI::ValidationError("--batches", "expected <count>x<size>");
    cfg.n_batches = std::stoi(m[1]);
    cfg.batch_size = std::stoi(m[2]);
}

std::vector<int> parse_hidden(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    if (out.empty()) throw CLI::ValidationError("--hidden", "expected comma-separated widths");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch-mode deep active learning benchmark"};
    app.require_subcommand(1);

    bmdal::BmalRunConfig cfg;
    std::string batches = "16x256", hidden = "512,512", out_file;
    auto* run = app.add_subcommand("run", "Run one active learning experiment");
    run->add_option("--data", cfg.data, "CSV path, http(s) URL or synthetic:friedman:n=<int>,noise=<float>")
        ->required();
    run->add_option("--target", cfg.target, "Target column (default: last column)");
    run->add_option("--method", cfg.method, "Selection method")
        ->check(CLI::IsMember({"random", "maxdiag", "maxdet", "bait-f", "bait-fb", "fw", "maxdist",
                               "kmeanspp", "lcmd"}));
    run->add_option("--mode", cfg.mode, "Selection mode")->check(CLI::IsMember({"p", "tp"}));
    run->add_option("--kernel", cfg.kernel, "Kernel specification");
    run->add_option("--sigma2", cfg.sigma2, "Noise variance for maxdet and bait");
    run->add_option("--init-train", cfg.init_train, "Initial training set size");
    run->add_option("--valid", cfg.valid, "Validation set size");
    run->add_option("--batches", batches, "<count>x<size>");
    run->add_option("--seed", cfg.seed, "Root seed");
    run->add_option("--activation", cfg.activation)->check(CLI::IsMember({"relu", "silu"}));
    run->add_option("--hidden", hidden, "Hidden layer widths, comma separated");
    run->add_option("--epochs", cfg.epochs, "Training epochs per step");
    run->add_option("--out", out_file, "Result JSON file")->required();

    std::string in_dir, report_out;
    auto* report = app.add_subcommand("report", "Aggregate result files into CSV tables");
    report->add_option("--in", in_dir)->required();
    report->add_option("--out", report_out)->required();

    std::string url, cache;
    auto* fetch = app.add_subcommand("fetch", "Download a CSV into the cache");
    fetch->add_option("--url", url)->required();
    fetch->add_option("--cache", cache, "Cache directory (default: $BMAL_CACHE or ~/.cache/bmal)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            parse_batches(batches, cfg);
            cfg.hidden = parse_hidden(hidden);
            const auto result = bmdal::run_bmal(cfg);
            bmdal::save_result(result, out_file);
            for (const auto& s : result.steps)
                std::cout << "step " << s.step << "  n_train " << s.n_train << "  rmse " << s.metrics.rmse
                          << "  mae " << s.metrics.mae << (s.status == "ok" ? "" : "  " + s.status) << '\n';
        } else if (*report) {
            bmdal::emit_report(in_dir, report_out);
        } else if (*fetch) {
            const auto dir = cache.empty() ? bmdal::default_cache_dir() : std::filesystem::path(cache);
            std::cout << bmdal::fetch_dataset(url, dir).string() << '\n';
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
