#pragma once

#include "drcpd/kernel.hpp"
#include "drcpd/metrics.hpp"
#include "drcpd/objectives.hpp"
#include "drcpd/series.hpp"
#include "drcpd/simulate.hpp"
#include "drcpd/window.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

// End-to-end benchmark orchestration: JSON experiment configs, the
// simulate/load -> partition -> fit -> score pipeline, minibatch sweeps, and
// multi-method comparisons. All numeric outputs are deterministic per config.

namespace drcpd {

enum class Method {
    DdreDskl, DdreBarr, DdreLsif, // density ratio networks
    Kliep, Rulsif,                // kernel density ratio baselines
    L1Cpd, L2Cpd, KCpd, ArCpd     // sliding-window baselines
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_is_ddre(Method m);
bool method_is_kernel(Method m);
bool method_is_window(Method m);

struct DdreConfig {
    std::vector<int> hidden_layers{64, 64, 64};
    double l2 = 0.01;
    double keep_prob = 0.5;
    double lambda = 10.0; // BARR barrier weight
    TrainConfig train;
};

struct WindowConfig {
    int half_window = 25;
    double rbf_gamma = 0.0; // 0: median-distance heuristic per series
    int ar_order = 1;
};

struct FeatureConfig {
    std::int64_t window_length = 64;
    std::int64_t hop = 32;
};

struct DataSource {
    bool simulated = true;
    SimConfig sim;
    std::string csv_path;
    bool csv_has_header = false;
    std::string csv_metadata;
};

struct ExperimentConfig {
    int schema_version = 1;
    Method method = Method::DdreDskl;
    DataSource data;
    double ref_fraction = 0.2;
    double test_fraction = 0.2;
    DdreConfig ddre;
    KernelFitConfig kernel;
    WindowConfig window;
    FeatureConfig features;
    int smooth_width = 5;
    int bootstrap_runs = 30;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int workers = 1;
};

// Strict parse: unknown keys, a missing schema_version, both or neither data
// source, or a sub-config that does not match the method are all errors with
// field-level messages.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Full resolved echo (defaults included); reparses to an identical config.
std::string resolved_config_json(const ExperimentConfig& config);

struct DetectionRow {
    std::string series_id;
    std::optional<std::int64_t> true_cp;
    std::int64_t predicted_cp = 0;
    std::optional<double> lag_samples;
    std::optional<double> lag_seconds;
    std::optional<double> k;
    std::optional<double> x0;
    std::optional<double> residual;
    std::string method;
};

struct ExperimentReport {
    std::vector<DetectionRow> rows;        // dataset record order
    std::vector<std::string> failures;     // "series_id: reason" for skipped series
    std::optional<AdlSummary> adl;         // absent when no series carries a truth label
    std::string resolved_config;
    std::string version;
    double wall_time_seconds = 0.0;
    bool train_aborted = false;
    std::string train_abort_reason;
    TrainingLog training_log; // DDRE methods only
    std::vector<std::string> train_sample_provenance; // "<series_id>:<row>" of pooled samples
    std::vector<std::string> test_series_ids;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

// Runs the report to disk: report.csv, summary.csv, meta.json,
// config.resolved under config.out_dir.
void write_experiment_outputs(const ExperimentConfig& config, const ExperimentReport& report);

struct SweepCell {
    std::string objective; // LSIF | DSKL | BARR
    int batch_size = 0;
    double median_adl = 0.0;
    double adl_iqr = 0.0;
    bool diverged = false;
};

// Objective x batch-size grid over {LSIF, DSKL, BARR}; everything else is
// held at the base config. Base config must use a DDRE method.
std::vector<SweepCell> sweep_minibatch(const ExperimentConfig& base,
                                       const std::vector<int>& sizes);

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path);

struct ComparisonRow {
    std::string method;
    std::size_t n_series = 0;
    double mean_adl = 0.0;
    double median_adl = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

// Configs must agree on data source and seed. Returns one row per config.
std::vector<ComparisonRow> compare_methods(const std::vector<ExperimentConfig>& configs,
                                           std::vector<ExperimentReport>* reports = nullptr);

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path);

// Blocks until fn(0..n-1) have all run on at most `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

} // namespace drcpd
