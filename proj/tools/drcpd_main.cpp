#include "drcpd/experiment.hpp"
#include "drcpd/series.hpp"
#include "drcpd/simulate.hpp"
#include "drcpd/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")
        ->required(config_required)
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "master seed (overrides config)");
    cmd->add_option("--workers", args.workers, "worker thread count (overrides config)");
}

// Overrides are applied to the raw JSON before validation so the resolved
// echo reflects exactly what ran.
drcpd::ExperimentConfig load_config(const CommonArgs& args) {
    std::ifstream in(args.config_path);
    if (!in) throw std::runtime_error("cannot open config file " + args.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buf.str());
    if (args.seed) {
        j["seed"] = *args.seed;
        // Derived sub-seeds must follow the override unless explicitly pinned.
        if (j.contains("data") && j["data"].is_object() &&
            j["data"].contains("simulate") && j["data"]["simulate"].is_object())
            j["data"]["simulate"].erase("seed");
        if (j.contains("train") && j["train"].is_object()) j["train"].erase("seed");
        if (j.contains("kernel") && j["kernel"].is_object()) j["kernel"].erase("seed");
    }
    if (args.out_dir.size()) j["out"] = args.out_dir;
    if (args.workers) j["workers"] = *args.workers;
    return drcpd::parse_experiment_config(j.dump());
}

int cmd_simulate(const CommonArgs& args) {
    const drcpd::ExperimentConfig cfg = load_config(args);
    if (!cfg.data.simulated)
        throw std::invalid_argument("simulate: config data source must be \"simulate\"");
    const drcpd::Dataset ds = drcpd::simulate_dataset(cfg.data.sim);
    drcpd::save_csv_dataset(ds, cfg.out_dir);
    std::cout << "wrote " << ds.records.size() << " series to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_run(const CommonArgs& args) {
    const drcpd::ExperimentConfig cfg = load_config(args);
    const drcpd::ExperimentReport report = drcpd::run_experiment(cfg);
    drcpd::write_experiment_outputs(cfg, report);
    std::cout << "scored " << report.rows.size() << " series ("
              << report.failures.size() << " failed)";
    if (report.adl) std::cout << ", mean ADL " << report.adl->mean;
    if (report.train_aborted)
        std::cout << "\ntraining aborted: " << report.train_abort_reason;
    std::cout << "\noutputs in " << cfg.out_dir << "\n";
    return report.rows.empty() ? 1 : 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<int>& sizes) {
    const drcpd::ExperimentConfig cfg = load_config(args);
    const auto cells = drcpd::sweep_minibatch(cfg, sizes);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = (std::filesystem::path(cfg.out_dir) / "sweep.csv").string();
    drcpd::write_sweep_csv(cells, path);
    std::cout << "wrote " << cells.size() << " sweep cells to " << path << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const CommonArgs& args) {
    std::vector<drcpd::ExperimentConfig> configs;
    for (const auto& path : config_paths) {
        CommonArgs per = args;
        per.config_path = path;
        per.out_dir.clear(); // comparison owns the output directory
        configs.push_back(load_config(per));
    }
    const auto rows = drcpd::compare_methods(configs);
    const std::string out_dir = args.out_dir.empty() ? configs.front().out_dir : args.out_dir;
    std::filesystem::create_directories(out_dir);
    const auto path = (std::filesystem::path(out_dir) / "compare.csv").string();
    drcpd::write_comparison_csv(rows, path);
    std::cout << "wrote " << rows.size() << " method rows to " << path << "\n";
    return 0;
}

int cmd_features(const CommonArgs& args) {
    const drcpd::ExperimentConfig cfg = load_config(args);
    drcpd::Dataset ds = cfg.data.simulated
                            ? drcpd::simulate_dataset(cfg.data.sim)
                            : drcpd::load_csv_dataset(cfg.data.csv_path,
                                                      cfg.data.csv_has_header,
                                                      cfg.data.csv_metadata);
    std::filesystem::create_directories(cfg.out_dir);
    for (const auto& record : ds.records) {
        const drcpd::FeatureSeries feats =
            drcpd::window_features(record, cfg.features.window_length, cfg.features.hop);
        const auto path =
            (std::filesystem::path(cfg.out_dir) / (record.id + "_features.csv")).string();
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path);
        for (std::int64_t c = 0; c < record.dim(); ++c)
            f << "avg_energy_" << c << ",teager_kaiser_" << c << ",line_length_" << c
              << (c + 1 == record.dim() ? '\n' : ',');
        char buf[64];
        for (Eigen::Index i = 0; i < feats.windows.rows(); ++i)
            for (Eigen::Index j = 0; j < feats.windows.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", feats.windows(i, j));
                f << buf << (j + 1 == feats.windows.cols() ? '\n' : ',');
            }
    }
    std::cout << "wrote feature files for " << ds.records.size() << " series to "
              << cfg.out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"density ratio change point detection toolkit"};
    app.set_version_flag("--version", drcpd::kToolkitVersion);
    app.require_subcommand(1);

    CommonArgs sim_args, run_args, sweep_args, compare_args, feat_args;
    std::vector<int> sweep_sizes{10, 100, 200, 1000};
    std::vector<std::string> compare_configs;

    CLI::App* sim = app.add_subcommand("simulate", "generate a simulated dataset as CSV");
    add_common(sim, sim_args);

    CLI::App* run = app.add_subcommand("run", "run one experiment end to end");
    add_common(run, run_args);

    CLI::App* sweep =
        app.add_subcommand("sweep-minibatch", "objective x batch-size sweep for DDRE");
    add_common(sweep, sweep_args);
    sweep->add_option("--sizes", sweep_sizes, "minibatch sizes to sweep");

    CLI::App* compare = app.add_subcommand("compare", "compare methods on shared data");
    compare->add_option("--config", compare_configs, "experiment configs (repeat, >= 2)")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--out", compare_args.out_dir, "output directory");
    compare->add_option("--seed", compare_args.seed, "master seed (overrides configs)");
    compare->add_option("--workers", compare_args.workers, "worker thread count");

    CLI::App* feats = app.add_subcommand("features", "windowed energy feature extraction");
    add_common(feats, feat_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_args);
        if (run->parsed()) return cmd_run(run_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_sizes);
        if (compare->parsed()) return cmd_compare(compare_configs, compare_args);
        if (feats->parsed()) return cmd_features(feat_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
