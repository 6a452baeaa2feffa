#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

// Kernel density ratio estimators: KLIEP (projected gradient ascent on a
// constrained log-likelihood) and rULSIF (closed-form regularized least
// squares). Both model the ratio as f(x) = sum_l theta_l k(x, c_l) with a
// Gaussian kernel k(x, c) = exp(-||x - c||^2 / (2 sigma^2)).

namespace drcpd {

enum class KernelMethod { Kliep, Rulsif };

std::string kernel_method_name(KernelMethod m);
KernelMethod kernel_method_from_name(const std::string& name);

struct KernelModel {
    Eigen::MatrixXd centers; // b x d
    double sigma = 1.0;
    Eigen::VectorXd theta;   // b
    KernelMethod method = KernelMethod::Kliep;
};

struct KernelFitConfig {
    int num_centers = 100;              // capped at the evaluation sample count
    std::vector<double> sigma_grid;     // empty: median-distance heuristic grid
    std::vector<double> lambda_grid{0.01, 0.1, 1.0}; // rULSIF regularization candidates
    int cv_folds = 5;
    int max_iterations = 2000;          // KLIEP ascent iterations
    double step_size = 0.1;             // KLIEP initial step, halved on regression
    double tolerance = 1e-9;            // KLIEP objective improvement cutoff
    std::uint64_t seed = 0;
};

// Entry (i, l) = exp(-||x_i - c_l||^2 / (2 sigma^2)).
Eigen::MatrixXd gaussian_design_matrix(const Eigen::MatrixXd& samples,
                                       const Eigen::MatrixXd& centers, double sigma);

// Median pairwise Euclidean distance, the bandwidth heuristic baseline.
double median_pairwise_distance(const Eigen::MatrixXd& samples);

// sigma_grid scaled onto the data: {0.25, 0.5, 1, 2, 4} x median distance.
std::vector<double> default_sigma_grid(const Eigen::MatrixXd& pooled);

// Maximize (1/n_e) sum log f(x_eval) subject to theta >= 0 and
// (1/n_r) sum f(x_ref) = 1. Each iteration ascends, projects back onto the
// constraint plane, clips negatives, and rescales so the constraint holds
// exactly; steps that lower the objective are retried at half length.
KernelModel kliep_fit(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& evaluation,
                      const KernelFitConfig& config);

// theta = (H + lambda I)^{-1} h with H = (1/n_r) Phi_ref' Phi_ref and
// h = (1/n_e) Phi_eval' 1; negative entries clipped after the solve.
KernelModel rulsif_fit(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& evaluation,
                       const KernelFitConfig& config);

Eigen::VectorXd kernel_predict(const KernelModel& model, const Eigen::MatrixXd& samples);

// Grid search over (sigma, lambda) by k-fold cross-validation on the
// evaluation set. KLIEP scores held-out mean log f (lambda ignored, returned
// as 0); rULSIF scores the squared-loss criterion. Deterministic per seed.
std::pair<double, double> select_sigma_cv(const Eigen::MatrixXd& reference,
                                          const Eigen::MatrixXd& evaluation,
                                          const KernelFitConfig& config,
                                          KernelMethod method);

// Versioned hexfloat text, bitwise round-trip.
void save_kernel_model(const KernelModel& model, const std::string& path);
KernelModel load_kernel_model(const std::string& path);

} // namespace drcpd
