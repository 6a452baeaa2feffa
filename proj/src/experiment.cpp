#include "drcpd/experiment.hpp"
#include "drcpd/net.hpp"
#include "drcpd/rng.hpp"
#include "drcpd/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace drcpd {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string method_name(Method m) {
    switch (m) {
        case Method::DdreDskl: return "DDRE-DSKL";
        case Method::DdreBarr: return "DDRE-BARR";
        case Method::DdreLsif: return "DDRE-LSIF";
        case Method::Kliep: return "KLIEP";
        case Method::Rulsif: return "RULSIF";
        case Method::L1Cpd: return "L1CPD";
        case Method::L2Cpd: return "L2CPD";
        case Method::KCpd: return "KCPD";
        case Method::ArCpd: return "ARCPD";
    }
    throw std::logic_error("method_name: bad method");
}

Method method_from_name(const std::string& name) {
    static const std::map<std::string, Method> table = {
        {"DDRE-DSKL", Method::DdreDskl}, {"DDRE-BARR", Method::DdreBarr},
        {"DDRE-LSIF", Method::DdreLsif}, {"KLIEP", Method::Kliep},
        {"RULSIF", Method::Rulsif},      {"L1CPD", Method::L1Cpd},
        {"L2CPD", Method::L2Cpd},        {"KCPD", Method::KCpd},
        {"ARCPD", Method::ArCpd}};
    const auto it = table.find(name);
    if (it == table.end())
        throw std::invalid_argument("config: unknown method \"" + name + "\"");
    return it->second;
}

bool method_is_ddre(Method m) {
    return m == Method::DdreDskl || m == Method::DdreBarr || m == Method::DdreLsif;
}

bool method_is_kernel(Method m) {
    return m == Method::Kliep || m == Method::Rulsif;
}

bool method_is_window(Method m) {
    return m == Method::L1Cpd || m == Method::L2Cpd || m == Method::KCpd ||
           m == Method::ArCpd;
}

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
    throw std::invalid_argument("config: " + where + ": " + what);
}

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) config_error(where, "expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            config_error(where, "unknown key \"" + item.key() + "\"");
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(where + "." + key, "wrong type");
    }
}

SimConfig parse_sim(const json& j, std::uint64_t default_seed) {
    require_keys(j, "data.simulate",
                 {"dimension", "series_length", "change_point",
                  "perturbation_magnitude", "trials", "seed"});
    SimConfig sim;
    sim.dimension = get_or(j, "data.simulate", "dimension", sim.dimension);
    sim.series_length = get_or(j, "data.simulate", "series_length", sim.series_length);
    sim.change_point = get_or(j, "data.simulate", "change_point", sim.change_point);
    sim.perturbation_magnitude =
        get_or(j, "data.simulate", "perturbation_magnitude", sim.perturbation_magnitude);
    sim.trials = get_or(j, "data.simulate", "trials", sim.trials);
    sim.seed = get_or(j, "data.simulate", "seed", default_seed);
    if (sim.dimension < 1) config_error("data.simulate.dimension", "must be >= 1");
    if (!(sim.change_point > 0 && sim.change_point < sim.series_length))
        config_error("data.simulate.change_point", "must lie inside (0, series_length)");
    if (sim.perturbation_magnitude <= 0.0)
        config_error("data.simulate.perturbation_magnitude", "must be > 0");
    if (sim.trials < 1) config_error("data.simulate.trials", "must be >= 1");
    return sim;
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    require_keys(j, "(root)",
                 {"schema_version", "method", "data", "split", "train", "kernel",
                  "window", "features", "smooth_width", "bootstrap_runs", "seed",
                  "out", "workers"});

    ExperimentConfig cfg;
    if (!j.contains("schema_version")) config_error("schema_version", "missing");
    cfg.schema_version = get_or(j, "(root)", "schema_version", 0);
    if (cfg.schema_version != 1)
        config_error("schema_version", "unsupported version " +
                                            std::to_string(cfg.schema_version));
    if (!j.contains("method")) config_error("method", "missing");
    cfg.method = method_from_name(j.at("method").get<std::string>());

    cfg.seed = get_or<std::uint64_t>(j, "(root)", "seed", 0);
    cfg.out_dir = get_or<std::string>(j, "(root)", "out", "out");
    cfg.workers = get_or(j, "(root)", "workers", 1);
    cfg.smooth_width = get_or(j, "(root)", "smooth_width", 5);
    cfg.bootstrap_runs = get_or(j, "(root)", "bootstrap_runs", 30);
    if (cfg.workers < 1) config_error("workers", "must be >= 1");
    if (cfg.smooth_width < 1 || cfg.smooth_width % 2 == 0)
        config_error("smooth_width", "must be odd and >= 1");
    if (cfg.bootstrap_runs < 1) config_error("bootstrap_runs", "must be >= 1");

    if (!j.contains("data")) config_error("data", "missing");
    const json& data = j.at("data");
    require_keys(data, "data", {"simulate", "csv"});
    const bool has_sim = data.contains("simulate");
    const bool has_csv = data.contains("csv");
    if (has_sim == has_csv)
        config_error("data", "exactly one of \"simulate\" or \"csv\" required");
    cfg.data.simulated = has_sim;
    if (has_sim) {
        cfg.data.sim = parse_sim(data.at("simulate"), cfg.seed);
    } else {
        const json& csv = data.at("csv");
        require_keys(csv, "data.csv", {"path", "has_header", "metadata"});
        if (!csv.contains("path")) config_error("data.csv.path", "missing");
        cfg.data.csv_path = csv.at("path").get<std::string>();
        cfg.data.csv_has_header = get_or(csv, "data.csv", "has_header", false);
        cfg.data.csv_metadata = get_or<std::string>(csv, "data.csv", "metadata", "");
    }

    if (j.contains("split")) {
        const json& split = j.at("split");
        require_keys(split, "split", {"ref_fraction", "test_fraction"});
        cfg.ref_fraction = get_or(split, "split", "ref_fraction", cfg.ref_fraction);
        cfg.test_fraction = get_or(split, "split", "test_fraction", cfg.test_fraction);
    }
    if (!(cfg.ref_fraction > 0.0 && cfg.ref_fraction < 1.0))
        config_error("split.ref_fraction", "must be in (0, 1)");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        config_error("split.test_fraction", "must be in (0, 1)");

    if (j.contains("train")) {
        if (!method_is_ddre(cfg.method))
            config_error("train", "only valid for DDRE-* methods, method is " +
                                      method_name(cfg.method));
        const json& t = j.at("train");
        require_keys(t, "train",
                     {"hidden_layers", "l2", "keep_prob", "lambda", "minibatch_size",
                      "learning_rate", "max_epochs", "patience", "validation_fraction",
                      "clamp_epsilon", "seed"});
        cfg.ddre.hidden_layers =
            get_or(t, "train", "hidden_layers", cfg.ddre.hidden_layers);
        cfg.ddre.l2 = get_or(t, "train", "l2", cfg.ddre.l2);
        cfg.ddre.keep_prob = get_or(t, "train", "keep_prob", cfg.ddre.keep_prob);
        cfg.ddre.lambda = get_or(t, "train", "lambda", cfg.ddre.lambda);
        cfg.ddre.train.minibatch_size =
            get_or(t, "train", "minibatch_size", cfg.ddre.train.minibatch_size);
        cfg.ddre.train.learning_rate =
            get_or(t, "train", "learning_rate", cfg.ddre.train.learning_rate);
        cfg.ddre.train.max_epochs = get_or(t, "train", "max_epochs", cfg.ddre.train.max_epochs);
        cfg.ddre.train.patience = get_or(t, "train", "patience", cfg.ddre.train.patience);
        cfg.ddre.train.validation_fraction =
            get_or(t, "train", "validation_fraction", cfg.ddre.train.validation_fraction);
        cfg.ddre.train.clamp_epsilon =
            get_or(t, "train", "clamp_epsilon", cfg.ddre.train.clamp_epsilon);
        cfg.ddre.train.seed =
            get_or<std::uint64_t>(t, "train", "seed", derive_seed(cfg.seed, 11));
    } else {
        cfg.ddre.train.seed = derive_seed(cfg.seed, 11);
    }
    if (cfg.ddre.hidden_layers.empty())
        config_error("train.hidden_layers", "must name at least one hidden layer");
    for (int h : cfg.ddre.hidden_layers)
        if (h < 1) config_error("train.hidden_layers", "layer widths must be >= 1");
    if (cfg.ddre.train.minibatch_size < 2)
        config_error("train.minibatch_size", "must be >= 2");
    if (cfg.ddre.lambda < 0.0) config_error("train.lambda", "must be >= 0");

    if (j.contains("kernel")) {
        if (!method_is_kernel(cfg.method))
            config_error("kernel", "only valid for KLIEP/RULSIF, method is " +
                                       method_name(cfg.method));
        const json& k = j.at("kernel");
        require_keys(k, "kernel",
                     {"num_centers", "sigma_grid", "lambda_grid", "cv_folds",
                      "max_iterations", "step_size", "tolerance", "seed"});
        cfg.kernel.num_centers = get_or(k, "kernel", "num_centers", cfg.kernel.num_centers);
        cfg.kernel.sigma_grid = get_or(k, "kernel", "sigma_grid", cfg.kernel.sigma_grid);
        cfg.kernel.lambda_grid = get_or(k, "kernel", "lambda_grid", cfg.kernel.lambda_grid);
        cfg.kernel.cv_folds = get_or(k, "kernel", "cv_folds", cfg.kernel.cv_folds);
        cfg.kernel.max_iterations =
            get_or(k, "kernel", "max_iterations", cfg.kernel.max_iterations);
        cfg.kernel.step_size = get_or(k, "kernel", "step_size", cfg.kernel.step_size);
        cfg.kernel.tolerance = get_or(k, "kernel", "tolerance", cfg.kernel.tolerance);
        cfg.kernel.seed = get_or<std::uint64_t>(k, "kernel", "seed", derive_seed(cfg.seed, 12));
    } else {
        cfg.kernel.seed = derive_seed(cfg.seed, 12);
    }
    if (cfg.kernel.num_centers < 1) config_error("kernel.num_centers", "must be >= 1");

    if (j.contains("window")) {
        if (!method_is_window(cfg.method))
            config_error("window", "only valid for *CPD window methods, method is " +
                                       method_name(cfg.method));
        const json& w = j.at("window");
        require_keys(w, "window", {"half_window", "rbf_gamma", "ar_order"});
        cfg.window.half_window = get_or(w, "window", "half_window", cfg.window.half_window);
        cfg.window.rbf_gamma = get_or(w, "window", "rbf_gamma", cfg.window.rbf_gamma);
        cfg.window.ar_order = get_or(w, "window", "ar_order", cfg.window.ar_order);
    }
    if (cfg.window.half_window < 2) config_error("window.half_window", "must be >= 2");
    if (cfg.window.rbf_gamma < 0.0)
        config_error("window.rbf_gamma", "must be >= 0 (0 selects the median heuristic)");
    if (cfg.window.ar_order < 1) config_error("window.ar_order", "must be >= 1");

    if (j.contains("features")) {
        const json& f = j.at("features");
        require_keys(f, "features", {"window_length", "hop"});
        cfg.features.window_length =
            get_or(f, "features", "window_length", cfg.features.window_length);
        cfg.features.hop = get_or(f, "features", "hop", cfg.features.hop);
    }
    if (cfg.features.window_length < 3) config_error("features.window_length", "must be >= 3");
    if (cfg.features.hop < 1) config_error("features.hop", "must be >= 1");

    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["method"] = method_name(cfg.method);
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["smooth_width"] = cfg.smooth_width;
    j["bootstrap_runs"] = cfg.bootstrap_runs;
    if (cfg.data.simulated) {
        j["data"]["simulate"] = {{"dimension", cfg.data.sim.dimension},
                                 {"series_length", cfg.data.sim.series_length},
                                 {"change_point", cfg.data.sim.change_point},
                                 {"perturbation_magnitude", cfg.data.sim.perturbation_magnitude},
                                 {"trials", cfg.data.sim.trials},
                                 {"seed", cfg.data.sim.seed}};
    } else {
        j["data"]["csv"] = {{"path", cfg.data.csv_path},
                            {"has_header", cfg.data.csv_has_header},
                            {"metadata", cfg.data.csv_metadata}};
    }
    j["split"] = {{"ref_fraction", cfg.ref_fraction}, {"test_fraction", cfg.test_fraction}};
    if (method_is_ddre(cfg.method)) {
        j["train"] = {{"hidden_layers", cfg.ddre.hidden_layers},
                      {"l2", cfg.ddre.l2},
                      {"keep_prob", cfg.ddre.keep_prob},
                      {"lambda", cfg.ddre.lambda},
                      {"minibatch_size", cfg.ddre.train.minibatch_size},
                      {"learning_rate", cfg.ddre.train.learning_rate},
                      {"max_epochs", cfg.ddre.train.max_epochs},
                      {"patience", cfg.ddre.train.patience},
                      {"validation_fraction", cfg.ddre.train.validation_fraction},
                      {"clamp_epsilon", cfg.ddre.train.clamp_epsilon},
                      {"seed", cfg.ddre.train.seed}};
    }
    if (method_is_kernel(cfg.method)) {
        j["kernel"] = {{"num_centers", cfg.kernel.num_centers},
                       {"sigma_grid", cfg.kernel.sigma_grid},
                       {"lambda_grid", cfg.kernel.lambda_grid},
                       {"cv_folds", cfg.kernel.cv_folds},
                       {"max_iterations", cfg.kernel.max_iterations},
                       {"step_size", cfg.kernel.step_size},
                       {"tolerance", cfg.kernel.tolerance},
                       {"seed", cfg.kernel.seed}};
    }
    if (method_is_window(cfg.method)) {
        j["window"] = {{"half_window", cfg.window.half_window},
                       {"rbf_gamma", cfg.window.rbf_gamma},
                       {"ar_order", cfg.window.ar_order}};
    }
    j["features"] = {{"window_length", cfg.features.window_length},
                     {"hop", cfg.features.hop}};
    return j.dump(2) + "\n";
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
    if (n_threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < std::min(n_threads, n); ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

namespace {

Dataset load_configured_dataset(const ExperimentConfig& cfg) {
    if (cfg.data.simulated) return simulate_dataset(cfg.data.sim);
    return load_csv_dataset(cfg.data.csv_path, cfg.data.csv_has_header, cfg.data.csv_metadata);
}

struct PooledSamples {
    Eigen::MatrixXd reference;
    Eigen::MatrixXd evaluation;
    std::vector<std::string> provenance; // reference rows first, then evaluation
};

PooledSamples pool_training_samples(const Dataset& train, const SplitSpec& split) {
    PooledSamples pooled;
    pooled.reference.resize(split.reference_count, train.dim());
    pooled.evaluation.resize(split.evaluation_count, train.dim());
    std::vector<std::string> eval_provenance;
    Eigen::Index r = 0, e = 0;
    for (const auto& record : train.records) {
        const auto first_eval = split.first_evaluation_index.at(record.id);
        for (std::int64_t t = 0; t < record.length(); ++t) {
            if (t < first_eval) {
                pooled.reference.row(r++) = record.samples.row(t);
                pooled.provenance.push_back(record.id + ":" + std::to_string(t));
            } else {
                pooled.evaluation.row(e++) = record.samples.row(t);
                eval_provenance.push_back(record.id + ":" + std::to_string(t));
            }
        }
    }
    pooled.provenance.insert(pooled.provenance.end(), eval_provenance.begin(),
                             eval_provenance.end());
    return pooled;
}

CostKind window_cost_kind(const ExperimentConfig& cfg, const TimeSeriesRecord& record) {
    CostKind kind;
    switch (cfg.method) {
        case Method::L1Cpd: kind.tag = CostTag::L1; break;
        case Method::L2Cpd: kind.tag = CostTag::L2; break;
        case Method::KCpd:
            kind.tag = CostTag::Rbf;
            kind.rbf_gamma = cfg.window.rbf_gamma > 0.0 ? cfg.window.rbf_gamma
                                                        : default_rbf_gamma(record.samples);
            break;
        case Method::ArCpd:
            kind.tag = CostTag::Ar;
            kind.ar_order = cfg.window.ar_order;
            break;
        default:
            throw std::logic_error("window_cost_kind: not a window method");
    }
    return kind;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opt_cell(const std::optional<double>& v) {
    return v ? fmt17(*v) : std::string();
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.version = kToolkitVersion;
    report.resolved_config = resolved_config_json(cfg);

    Dataset dataset = load_configured_dataset(cfg);
    for (const auto& record : dataset.records) validate_record(record);

    auto [train_ds, test_ds] =
        train_test_partition(dataset, cfg.test_fraction, derive_seed(cfg.seed, 10));
    std::set<std::string> test_ids;
    for (const auto& record : test_ds.records) {
        test_ids.insert(record.id);
        report.test_series_ids.push_back(record.id);
    }

    // Ratio predictor shared by the DDRE and kernel branches; window methods
    // bypass it entirely.
    std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> predict;
    SplitSpec split;
    if (!method_is_window(cfg.method)) {
        split = split_reference_evaluation(train_ds, cfg.ref_fraction);
        PooledSamples pooled = pool_training_samples(train_ds, split);
        report.train_sample_provenance = std::move(pooled.provenance);

        if (method_is_ddre(cfg.method)) {
            std::vector<int> sizes;
            sizes.push_back(static_cast<int>(dataset.dim()));
            sizes.insert(sizes.end(), cfg.ddre.hidden_layers.begin(),
                         cfg.ddre.hidden_layers.end());
            sizes.push_back(1);
            MlpModel init = mlp_init(sizes, derive_seed(cfg.seed, 20), cfg.ddre.l2,
                                     cfg.ddre.keep_prob);
            ObjectiveKind objective;
            objective.tag = cfg.method == Method::DdreDskl   ? ObjectiveTag::Dskl
                            : cfg.method == Method::DdreBarr ? ObjectiveTag::Barr
                                                             : ObjectiveTag::Lsif;
            objective.lambda = cfg.ddre.lambda;
            TrainResult trained = train_ddre(init, pooled.reference, pooled.evaluation,
                                             objective, cfg.ddre.train);
            report.train_aborted = trained.aborted;
            report.train_abort_reason = trained.abort_reason;
            report.training_log = trained.log;
            predict = [model = trained.model](const Eigen::MatrixXd& x) {
                return mlp_forward(model, x, false).first;
            };
        } else {
            KernelModel model = cfg.method == Method::Kliep
                                    ? kliep_fit(pooled.reference, pooled.evaluation, cfg.kernel)
                                    : rulsif_fit(pooled.reference, pooled.evaluation, cfg.kernel);
            predict = [model](const Eigen::MatrixXd& x) { return kernel_predict(model, x); };
        }
    }

    // Score every series: test series over their full trace, training series
    // over their evaluation segment (their reference segment defined state A).
    struct Scored {
        std::optional<DetectionRow> row;
        std::string failure;
    };
    std::vector<Scored> scored(dataset.records.size());

    parallel_for(dataset.records.size(), cfg.workers, [&](std::size_t i) {
        const TimeSeriesRecord& record = dataset.records[i];
        DetectionRow row;
        row.series_id = record.id;
        row.true_cp = record.true_change_point;
        row.method = method_name(cfg.method);
        try {
            if (method_is_window(cfg.method)) {
                row.predicted_cp =
                    window_detect(record, cfg.window.half_window, window_cost_kind(cfg, record));
            } else {
                const bool is_test = test_ids.count(record.id) > 0;
                const std::int64_t offset =
                    is_test ? 0 : split.first_evaluation_index.at(record.id);
                const Eigen::MatrixXd segment =
                    record.samples.bottomRows(record.length() - offset);
                const Eigen::VectorXd ratios = predict(segment);
                RatioTrace trace;
                trace.series_id = record.id;
                trace.offset = offset;
                trace.values.assign(ratios.data(), ratios.data() + ratios.size());
                const LogisticFit fit = fit_logistic(trace, cfg.smooth_width);
                const auto last = trace.offset + static_cast<std::int64_t>(trace.values.size()) - 1;
                row.predicted_cp = std::clamp(static_cast<std::int64_t>(std::llround(fit.x0)),
                                              trace.offset, last);
                row.k = fit.k;
                row.x0 = fit.x0;
                row.residual = fit.residual;
            }
            if (row.true_cp) {
                row.lag_samples =
                    static_cast<double>(std::llabs(*row.true_cp - row.predicted_cp));
                if (record.sample_rate && *record.sample_rate > 0.0)
                    row.lag_seconds = *row.lag_samples / *record.sample_rate;
            }
            scored[i].row = std::move(row);
        } catch (const std::exception& e) {
            scored[i].failure = record.id + ": " + e.what();
        }
    });

    std::vector<double> lags;
    for (auto& s : scored) {
        if (s.row) {
            if (s.row->lag_samples) lags.push_back(*s.row->lag_samples);
            report.rows.push_back(std::move(*s.row));
        } else {
            report.failures.push_back(s.failure);
        }
    }
    if (!lags.empty())
        report.adl = bootstrap_adl(lags, cfg.bootstrap_runs, derive_seed(cfg.seed, 30));

    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentReport& report) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);

    {
        std::ofstream f(out / "config.resolved");
        if (!f) throw std::runtime_error("cannot write " + (out / "config.resolved").string());
        f << report.resolved_config;
    }
    {
        std::ofstream f(out / "report.csv");
        if (!f) throw std::runtime_error("cannot write " + (out / "report.csv").string());
        f << "series_id,true_cp,predicted_cp,lag_samples,lag_seconds,k,x0,residual,method\n";
        for (const auto& r : report.rows) {
            f << r.series_id << ','
              << (r.true_cp ? std::to_string(*r.true_cp) : std::string()) << ','
              << r.predicted_cp << ',' << opt_cell(r.lag_samples) << ','
              << opt_cell(r.lag_seconds) << ',' << opt_cell(r.k) << ','
              << opt_cell(r.x0) << ',' << opt_cell(r.residual) << ',' << r.method << '\n';
        }
    }
    {
        std::ofstream f(out / "summary.csv");
        if (!f) throw std::runtime_error("cannot write " + (out / "summary.csv").string());
        f << "metric,value\n";
        f << "series_total," << report.rows.size() + report.failures.size() << '\n';
        f << "series_scored," << report.rows.size() << '\n';
        f << "series_failed," << report.failures.size() << '\n';
        if (report.adl) {
            const AdlSummary& a = *report.adl;
            f << "lags_counted," << a.per_series_lags.size() << '\n';
            f << "mean_adl," << fmt17(a.mean) << '\n';
            f << "bootstrap_runs," << a.bootstrap_runs << '\n';
            f << "bootstrap_median_adl," << fmt17(a.median) << '\n';
            f << "bootstrap_q1_adl," << fmt17(a.q1) << '\n';
            f << "bootstrap_q3_adl," << fmt17(a.q3) << '\n';
        }
    }
    {
        ordered_json meta;
        meta["version"] = report.version;
        meta["method"] = method_name(cfg.method);
        meta["wall_time_seconds"] = report.wall_time_seconds;
        meta["train_aborted"] = report.train_aborted;
        meta["train_abort_reason"] = report.train_abort_reason;
        meta["failures"] = report.failures;
        meta["test_series"] = report.test_series_ids;
        std::ofstream f(out / "meta.json");
        if (!f) throw std::runtime_error("cannot write " + (out / "meta.json").string());
        f << meta.dump(2) << '\n';
    }
    if (!report.training_log.epochs.empty())
        save_training_log(report.training_log, (out / "training_log.csv").string());
}

std::vector<SweepCell> sweep_minibatch(const ExperimentConfig& base,
                                       const std::vector<int>& sizes) {
    if (!method_is_ddre(base.method))
        throw std::invalid_argument("sweep-minibatch: base config must use a DDRE-* method");
    if (sizes.empty())
        throw std::invalid_argument("sweep-minibatch: no batch sizes given");
    for (int s : sizes)
        if (s < 2) throw std::invalid_argument("sweep-minibatch: batch sizes must be >= 2");

    const std::vector<std::pair<Method, std::string>> objectives = {
        {Method::DdreLsif, "LSIF"}, {Method::DdreDskl, "DSKL"}, {Method::DdreBarr, "BARR"}};

    std::vector<SweepCell> cells(objectives.size() * sizes.size());
    parallel_for(cells.size(), base.workers, [&](std::size_t idx) {
        const auto& [method, name] = objectives[idx / sizes.size()];
        const int size = sizes[idx % sizes.size()];
        ExperimentConfig cfg = base;
        cfg.method = method;
        cfg.ddre.train.minibatch_size = size;
        cfg.workers = 1; // the sweep already owns the worker pool
        const ExperimentReport report = run_experiment(cfg);

        SweepCell cell;
        cell.objective = name;
        cell.batch_size = size;
        cell.diverged = report.train_aborted;
        if (report.adl && !report.adl->per_series_lags.empty()) {
            cell.median_adl = quantile(report.adl->per_series_lags, 0.5);
            cell.adl_iqr = quantile(report.adl->per_series_lags, 0.75) -
                           quantile(report.adl->per_series_lags, 0.25);
        } else {
            cell.median_adl = std::numeric_limits<double>::quiet_NaN();
            cell.adl_iqr = std::numeric_limits<double>::quiet_NaN();
        }
        cells[idx] = cell;
    });
    return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "objective,batch_size,median_adl,adl_iqr,diverged\n";
    for (const auto& c : cells) {
        f << c.objective << ',' << c.batch_size << ','
          << (std::isfinite(c.median_adl) ? fmt17(c.median_adl) : std::string()) << ','
          << (std::isfinite(c.adl_iqr) ? fmt17(c.adl_iqr) : std::string()) << ','
          << (c.diverged ? "1" : "0") << '\n';
    }
}

std::vector<ComparisonRow> compare_methods(const std::vector<ExperimentConfig>& configs,
                                           std::vector<ExperimentReport>* reports) {
    if (configs.size() < 2)
        throw std::invalid_argument("compare: need >= 2 configs");
    const auto& first = configs.front();
    for (const auto& cfg : configs) {
        if (cfg.seed != first.seed)
            throw std::invalid_argument("compare: configs disagree on seed");
        if (cfg.data.simulated != first.data.simulated)
            throw std::invalid_argument("compare: configs disagree on data source");
        if (cfg.data.simulated) {
            const SimConfig &a = cfg.data.sim, &b = first.data.sim;
            if (a.dimension != b.dimension || a.series_length != b.series_length ||
                a.change_point != b.change_point ||
                a.perturbation_magnitude != b.perturbation_magnitude ||
                a.trials != b.trials || a.seed != b.seed)
                throw std::invalid_argument("compare: configs disagree on simulation data");
        } else if (cfg.data.csv_path != first.data.csv_path ||
                   cfg.data.csv_has_header != first.data.csv_has_header ||
                   cfg.data.csv_metadata != first.data.csv_metadata) {
            throw std::invalid_argument("compare: configs disagree on csv data");
        }
    }

    std::vector<ComparisonRow> rows(configs.size());
    if (reports) reports->resize(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        ExperimentReport report = run_experiment(configs[i]);
        if (!report.adl)
            throw std::runtime_error("compare: no labeled series for method " +
                                     method_name(configs[i].method));
        const AdlSummary& a = *report.adl;
        rows[i] = {method_name(configs[i].method), a.per_series_lags.size(),
                   a.mean,  a.median, a.q1, a.q3};
        if (reports) (*reports)[i] = std::move(report);
    }
    return rows;
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "method,n_series,mean_adl,bootstrap_median_adl,bootstrap_q1_adl,bootstrap_q3_adl\n";
    for (const auto& r : rows)
        f << r.method << ',' << r.n_series << ',' << fmt17(r.mean_adl) << ','
          << fmt17(r.median_adl) << ',' << fmt17(r.q1) << ',' << fmt17(r.q3) << '\n';
}

} // namespace drcpd
