#pragma once

#include "drcpd/series.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <utility>

// Monte Carlo fixtures: a pre-change multivariate Gaussian with a random SPD
// covariance and a post-change Gaussian with perturbed parameters, joined at a
// known change point. The distribution pair is drawn once per config seed so
// all trials of an experiment share it; per-trial streams only drive the
// observation noise.

namespace drcpd {

struct GaussianSpec {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma; // symmetric positive definite
};

void validate_gaussian_spec(const GaussianSpec& spec);

struct SimConfig {
    int dimension = 10;
    std::int64_t series_length = 500;
    std::int64_t change_point = 250;
    double perturbation_magnitude = 1.0;
    int trials = 20;
    std::uint64_t seed = 0;
};

// Sigma = A'A + 0.1 * D * I with A entries uniform on [0, 1).
Eigen::MatrixXd random_spd(int dimension, std::uint64_t seed);

// Rows are mu + L z, L the lower Cholesky factor, z standard normal from the
// seeded stream.
Eigen::MatrixXd sample_mvn(const GaussianSpec& spec, std::int64_t n, std::uint64_t seed);

// Same affine map applied to caller-supplied standard normal draws; the z = 0
// row recovers mu exactly.
Eigen::MatrixXd mvn_transform(const GaussianSpec& spec, const Eigen::MatrixXd& z);

// mu2 = mu + magnitude * u, u uniform on [-1, 1)^D;
// sigma2 = sigma + magnitude * E'E / D, E uniform on [0, 1)^(D x D).
GaussianSpec perturb_params(const GaussianSpec& spec, double magnitude, std::uint64_t seed);

// The (pre, post) distribution pair implied by config.seed.
std::pair<GaussianSpec, GaussianSpec> make_gaussian_pair(const SimConfig& config);

// Rows [0, change_point) from the pre-change spec, the rest from the
// post-change spec; deterministic per (config.seed, trial).
TimeSeriesRecord simulate_series(const SimConfig& config, int trial);

Dataset simulate_dataset(const SimConfig& config);

} // namespace drcpd
