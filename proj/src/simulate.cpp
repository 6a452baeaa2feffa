#include "drcpd/simulate.hpp"
#include "drcpd/rng.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>
#include <string>

namespace drcpd {

namespace {

// Seed stream layout under a config seed: 0 covariance, 1 mean, 2 perturbation,
// 100 + trial for per-trial observation noise.
constexpr std::uint64_t kStreamSigma = 0;
constexpr std::uint64_t kStreamMu = 1;
constexpr std::uint64_t kStreamPerturb = 2;
constexpr std::uint64_t kStreamTrialBase = 100;

Eigen::LLT<Eigen::MatrixXd> factor_or_throw(const GaussianSpec& spec, const char* who) {
    Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(std::string(who) + ": covariance is not positive definite");
    return llt;
}

} // namespace

void validate_gaussian_spec(const GaussianSpec& spec) {
    if (spec.mu.size() < 1)
        throw std::invalid_argument("validate_gaussian_spec: empty mean");
    if (spec.sigma.rows() != spec.mu.size() || spec.sigma.cols() != spec.mu.size())
        throw std::invalid_argument("validate_gaussian_spec: covariance shape mismatch");
    const double asym = (spec.sigma - spec.sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12)
        throw std::invalid_argument("validate_gaussian_spec: covariance asymmetric by " +
                                    std::to_string(asym));
    factor_or_throw(spec, "validate_gaussian_spec");
}

Eigen::MatrixXd random_spd(int dimension, std::uint64_t seed) {
    if (dimension < 1) throw std::invalid_argument("random_spd: dimension must be >= 1");
    Rng rng(seed);
    Eigen::MatrixXd a(dimension, dimension);
    for (int i = 0; i < dimension; ++i)
        for (int j = 0; j < dimension; ++j)
            a(i, j) = rng.uniform01();
    Eigen::MatrixXd sigma = a.transpose() * a;
    sigma.diagonal().array() += 0.1 * static_cast<double>(dimension);
    // A'A picks up rounding asymmetry in the last bits; symmetrize exactly.
    sigma = 0.5 * (sigma + sigma.transpose());
    return sigma;
}

Eigen::MatrixXd mvn_transform(const GaussianSpec& spec, const Eigen::MatrixXd& z) {
    if (z.cols() != spec.mu.size())
        throw std::invalid_argument("mvn_transform: draw dimension mismatch");
    const Eigen::MatrixXd L = factor_or_throw(spec, "mvn_transform").matrixL();
    Eigen::MatrixXd out = z * L.transpose();
    out.rowwise() += spec.mu.transpose();
    return out;
}

Eigen::MatrixXd sample_mvn(const GaussianSpec& spec, std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_mvn: n must be >= 1");
    Rng rng(seed);
    Eigen::MatrixXd z(n, spec.mu.size());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j)
            z(i, j) = rng.normal();
    return mvn_transform(spec, z);
}

GaussianSpec perturb_params(const GaussianSpec& spec, double magnitude, std::uint64_t seed) {
    if (magnitude <= 0.0)
        throw std::invalid_argument("perturb_params: magnitude must be > 0");
    const auto d = spec.mu.size();
    Rng rng(seed);

    GaussianSpec out;
    out.mu = spec.mu;
    for (Eigen::Index i = 0; i < d; ++i)
        out.mu(i) += magnitude * rng.uniform(-1.0, 1.0);

    Eigen::MatrixXd e(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            e(i, j) = rng.uniform01();
    Eigen::MatrixXd shift = e.transpose() * e;
    shift = 0.5 * (shift + shift.transpose());
    out.sigma = spec.sigma + (magnitude / static_cast<double>(d)) * shift;
    out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
    validate_gaussian_spec(out);
    return out;
}

std::pair<GaussianSpec, GaussianSpec> make_gaussian_pair(const SimConfig& config) {
    if (config.dimension < 1)
        throw std::invalid_argument("make_gaussian_pair: dimension must be >= 1");
    GaussianSpec pre;
    pre.sigma = random_spd(config.dimension, derive_seed(config.seed, kStreamSigma));
    Rng mu_rng(derive_seed(config.seed, kStreamMu));
    pre.mu.resize(config.dimension);
    for (int i = 0; i < config.dimension; ++i) pre.mu(i) = mu_rng.uniform01();
    validate_gaussian_spec(pre);

    GaussianSpec post = perturb_params(pre, config.perturbation_magnitude,
                                       derive_seed(config.seed, kStreamPerturb));
    return {pre, post};
}

TimeSeriesRecord simulate_series(const SimConfig& config, int trial) {
    if (!(config.change_point > 0 && config.change_point < config.series_length))
        throw std::invalid_argument("simulate_series: change_point must lie inside (0, T)");
    if (trial < 0) throw std::invalid_argument("simulate_series: trial must be >= 0");

    const auto [pre, post] = make_gaussian_pair(config);
    const auto trial_u = static_cast<std::uint64_t>(trial);
    const Eigen::MatrixXd head =
        sample_mvn(pre, config.change_point,
                   derive_seed(config.seed, kStreamTrialBase + 2 * trial_u));
    const Eigen::MatrixXd tail =
        sample_mvn(post, config.series_length - config.change_point,
                   derive_seed(config.seed, kStreamTrialBase + 2 * trial_u + 1));

    TimeSeriesRecord record;
    record.id = "sim-" + std::to_string(trial);
    record.samples.resize(config.series_length, config.dimension);
    record.samples << head, tail;
    record.true_change_point = config.change_point;
    validate_record(record);
    return record;
}

Dataset simulate_dataset(const SimConfig& config) {
    if (config.trials < 1)
        throw std::invalid_argument("simulate_dataset: trials must be >= 1");
    Dataset ds;
    ds.role = DatasetRole::Train;
    for (int trial = 0; trial < config.trials; ++trial)
        ds.records.push_back(simulate_series(config, trial));
    return ds;
}

} // namespace drcpd
