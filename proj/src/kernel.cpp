#include "drcpd/kernel.hpp"
#include "drcpd/rng.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace drcpd {

std::string kernel_method_name(KernelMethod m) {
    return m == KernelMethod::Kliep ? "KLIEP" : "RULSIF";
}

KernelMethod kernel_method_from_name(const std::string& name) {
    if (name == "KLIEP") return KernelMethod::Kliep;
    if (name == "RULSIF") return KernelMethod::Rulsif;
    throw std::invalid_argument("unknown kernel method: " + name);
}

Eigen::MatrixXd gaussian_design_matrix(const Eigen::MatrixXd& samples,
                                       const Eigen::MatrixXd& centers, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_design_matrix: sigma must be > 0");
    if (samples.cols() != centers.cols())
        throw std::invalid_argument("gaussian_design_matrix: dimension mismatch");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd phi(samples.rows(), centers.rows());
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        for (Eigen::Index l = 0; l < centers.rows(); ++l)
            phi(i, l) = std::exp(-(samples.row(i) - centers.row(l)).squaredNorm() * inv);
    return phi;
}

double median_pairwise_distance(const Eigen::MatrixXd& samples) {
    const Eigen::Index n = samples.rows();
    if (n < 2) throw std::invalid_argument("median_pairwise_distance: need at least 2 samples");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            dists.push_back((samples.row(i) - samples.row(j)).norm());
    const auto mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
    double median = dists[mid];
    if (dists.size() % 2 == 0) {
        auto lower = std::max_element(dists.begin(),
                                      dists.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + *lower);
    }
    return median;
}

std::vector<double> default_sigma_grid(const Eigen::MatrixXd& pooled) {
    // Above 2000 rows the heuristic runs on an evenly strided subsample so
    // the pairwise pass stays quadratic in a bounded count.
    constexpr Eigen::Index kMaxRows = 2000;
    double med;
    if (pooled.rows() > kMaxRows) {
        Eigen::MatrixXd sub(kMaxRows, pooled.cols());
        for (Eigen::Index i = 0; i < kMaxRows; ++i)
            sub.row(i) = pooled.row(i * pooled.rows() / kMaxRows);
        med = median_pairwise_distance(sub);
    } else {
        med = median_pairwise_distance(pooled);
    }
    if (med <= 0.0) med = 1.0; // degenerate cloud, fall back to unit scale
    return {0.25 * med, 0.5 * med, med, 2.0 * med, 4.0 * med};
}

namespace {

void check_fit_inputs(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& evaluation,
                      const char* who) {
    if (reference.rows() == 0 || evaluation.rows() == 0)
        throw std::invalid_argument(std::string(who) + ": empty sample set");
    if (reference.cols() != evaluation.cols())
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

void check_degenerate(const Eigen::MatrixXd& phi, const char* who) {
    bool identical = true;
    for (Eigen::Index i = 1; i < phi.rows() && identical; ++i)
        identical = phi.row(i) == phi.row(0);
    if (phi.rows() > 1 && identical)
        throw std::runtime_error(std::string(who) + ": degenerate design matrix, all rows identical");
}

Eigen::MatrixXd draw_centers(const Eigen::MatrixXd& evaluation, int num_centers,
                             std::uint64_t seed) {
    const auto n_e = evaluation.rows();
    const auto b = std::min<Eigen::Index>(num_centers, n_e);
    if (b < 1) throw std::invalid_argument("draw_centers: need at least one center");
    Rng rng(derive_seed(seed, 17));
    const auto order = rng.permutation(static_cast<std::size_t>(n_e));
    Eigen::MatrixXd centers(b, evaluation.cols());
    for (Eigen::Index l = 0; l < b; ++l)
        centers.row(l) = evaluation.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(l)]));
    return centers;
}

// log f guarded against exact zeros so a bad step shows up as a huge
// regression instead of NaN.
double kliep_objective(const Eigen::MatrixXd& phi_eval, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd f = phi_eval * theta;
    double obj = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        obj += std::log(std::max(f(i), 1e-300));
    return obj / static_cast<double>(f.size());
}

// Feasibility projection: move along the constraint normal, clip negatives,
// rescale so b_vec . theta = 1 exactly.
bool project_feasible(Eigen::VectorXd& theta, const Eigen::VectorXd& b_vec, double b_sq) {
    theta += b_vec * ((1.0 - b_vec.dot(theta)) / b_sq);
    theta = theta.cwiseMax(0.0);
    const double scale = b_vec.dot(theta);
    if (scale <= 0.0) return false; // everything clipped away
    theta /= scale;
    return true;
}

Eigen::VectorXd kliep_solve(const Eigen::MatrixXd& phi_eval, const Eigen::MatrixXd& phi_ref,
                            const KernelFitConfig& config) {
    const Eigen::Index b = phi_eval.cols();
    const double n_e = static_cast<double>(phi_eval.rows());
    const Eigen::VectorXd b_vec = phi_ref.colwise().mean().transpose();
    const double b_sq = b_vec.squaredNorm();
    if (b_sq <= 0.0)
        throw std::runtime_error("kliep_solve: reference kernel means vanish");

    Eigen::VectorXd theta = Eigen::VectorXd::Ones(b);
    theta /= b_vec.dot(theta);
    double obj = kliep_objective(phi_eval, theta);

    for (int it = 0; it < config.max_iterations; ++it) {
        const Eigen::VectorXd f = phi_eval * theta;
        const Eigen::VectorXd grad =
            phi_eval.transpose() * f.cwiseMax(1e-300).cwiseInverse() / n_e;

        double step = config.step_size;
        bool accepted = false;
        for (int halving = 0; halving <= 20; ++halving, step *= 0.5) {
            Eigen::VectorXd cand = theta + step * grad;
            if (!project_feasible(cand, b_vec, b_sq)) continue;
            const double cand_obj = kliep_objective(phi_eval, cand);
            if (cand_obj >= obj) {
                const double gain = cand_obj - obj;
                theta = std::move(cand);
                obj = cand_obj;
                accepted = gain >= config.tolerance;
                break;
            }
        }
        if (!accepted) break;
    }

    // Exact rescale; the loop leaves the constraint satisfied to rounding.
    theta /= b_vec.dot(theta);
    return theta;
}

Eigen::VectorXd rulsif_solve(const Eigen::MatrixXd& phi_eval, const Eigen::MatrixXd& phi_ref,
                             double lambda) {
    const double n_r = static_cast<double>(phi_ref.rows());
    const double n_e = static_cast<double>(phi_eval.rows());
    const Eigen::MatrixXd H = phi_ref.transpose() * phi_ref / n_r;
    const Eigen::VectorXd h = phi_eval.colwise().sum().transpose() / n_e;
    const Eigen::MatrixXd A = H + lambda * Eigen::MatrixXd::Identity(H.rows(), H.cols());

    Eigen::VectorXd theta;
    if (lambda > 0.0) {
        theta = Eigen::LDLT<Eigen::MatrixXd>(A).solve(h);
    } else {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible())
            throw std::runtime_error("rulsif_solve: singular kernel Gram matrix at lambda = 0");
        theta = lu.solve(h);
    }
    return theta.cwiseMax(0.0);
}

// Contiguous chunks of a seeded permutation of the evaluation rows.
std::vector<std::vector<int>> make_folds(Eigen::Index n, int k, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 23));
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i)
        folds[static_cast<std::size_t>(i * k / n)].push_back(
            static_cast<int>(order[static_cast<std::size_t>(i)]));
    return folds;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& data, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
    return out;
}

std::vector<double> resolve_sigma_grid(const KernelFitConfig& config,
                                       const Eigen::MatrixXd& reference,
                                       const Eigen::MatrixXd& evaluation) {
    if (!config.sigma_grid.empty()) {
        for (double s : config.sigma_grid)
            if (s <= 0.0) throw std::invalid_argument("sigma_grid entries must be > 0");
        return config.sigma_grid;
    }
    Eigen::MatrixXd pooled(reference.rows() + evaluation.rows(), reference.cols());
    pooled << reference, evaluation;
    return default_sigma_grid(pooled);
}

} // namespace

std::pair<double, double> select_sigma_cv(const Eigen::MatrixXd& reference,
                                          const Eigen::MatrixXd& evaluation,
                                          const KernelFitConfig& config,
                                          KernelMethod method) {
    check_fit_inputs(reference, evaluation, "select_sigma_cv");
    const std::vector<double> sigmas = resolve_sigma_grid(config, reference, evaluation);
    std::vector<double> lambdas = method == KernelMethod::Rulsif
                                      ? config.lambda_grid
                                      : std::vector<double>{0.0};
    if (sigmas.empty() || lambdas.empty())
        throw std::invalid_argument("select_sigma_cv: empty parameter grid");
    if (sigmas.size() == 1 && lambdas.size() == 1)
        return {sigmas[0], lambdas[0]};
    if (config.cv_folds < 2)
        throw std::invalid_argument("select_sigma_cv: cv_folds must be >= 2");
    if (evaluation.rows() < config.cv_folds)
        throw std::invalid_argument("select_sigma_cv: fewer evaluation samples than folds");

    const auto folds = make_folds(evaluation.rows(), config.cv_folds, config.seed);

    double best_score = -std::numeric_limits<double>::infinity();
    double best_sigma = sigmas[0];
    double best_lambda = lambdas[0];

    for (double sigma : sigmas) {
        for (double lambda : lambdas) {
            double score_sum = 0.0;
            for (std::size_t f = 0; f < folds.size(); ++f) {
                std::vector<int> train_rows;
                for (std::size_t g = 0; g < folds.size(); ++g)
                    if (g != f)
                        train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
                const Eigen::MatrixXd eval_train = take_rows(evaluation, train_rows);
                const Eigen::MatrixXd eval_test = take_rows(evaluation, folds[f]);

                const Eigen::MatrixXd centers =
                    draw_centers(eval_train, config.num_centers,
                                 derive_seed(config.seed, 31 + f));
                const Eigen::MatrixXd phi_r = gaussian_design_matrix(reference, centers, sigma);
                const Eigen::MatrixXd phi_e = gaussian_design_matrix(eval_train, centers, sigma);
                const Eigen::MatrixXd phi_t = gaussian_design_matrix(eval_test, centers, sigma);

                if (method == KernelMethod::Kliep) {
                    const Eigen::VectorXd theta = kliep_solve(phi_e, phi_r, config);
                    const Eigen::VectorXd f_test = phi_t * theta;
                    double s = 0.0;
                    for (Eigen::Index i = 0; i < f_test.size(); ++i)
                        s += std::log(std::max(f_test(i), 1e-300));
                    score_sum += s / static_cast<double>(f_test.size());
                } else {
                    const Eigen::VectorXd theta = rulsif_solve(phi_e, phi_r, lambda);
                    const Eigen::VectorXd f_ref = phi_r * theta;
                    const Eigen::VectorXd f_test = phi_t * theta;
                    // Held-out squared-loss criterion, lower is better.
                    const double crit = 0.5 * f_ref.squaredNorm() /
                                            static_cast<double>(f_ref.size()) -
                                        f_test.mean();
                    score_sum += -crit;
                }
            }
            const double score = score_sum / static_cast<double>(folds.size());
            if (score > best_score) {
                best_score = score;
                best_sigma = sigma;
                best_lambda = lambda;
            }
        }
    }
    return {best_sigma, method == KernelMethod::Rulsif ? best_lambda : 0.0};
}

KernelModel kliep_fit(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& evaluation,
                      const KernelFitConfig& config) {
    check_fit_inputs(reference, evaluation, "kliep_fit");
    const auto [sigma, lambda] = select_sigma_cv(reference, evaluation, config,
                                                 KernelMethod::Kliep);
    (void)lambda;

    KernelModel model;
    model.method = KernelMethod::Kliep;
    model.sigma = sigma;
    model.centers = draw_centers(evaluation, config.num_centers, config.seed);

    const Eigen::MatrixXd phi_r = gaussian_design_matrix(reference, model.centers, sigma);
    const Eigen::MatrixXd phi_e = gaussian_design_matrix(evaluation, model.centers, sigma);
    check_degenerate(phi_e, "kliep_fit");
    model.theta = kliep_solve(phi_e, phi_r, config);
    return model;
}

KernelModel rulsif_fit(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& evaluation,
                       const KernelFitConfig& config) {
    check_fit_inputs(reference, evaluation, "rulsif_fit");
    const auto [sigma, lambda] = select_sigma_cv(reference, evaluation, config,
                                                 KernelMethod::Rulsif);

    KernelModel model;
    model.method = KernelMethod::Rulsif;
    model.sigma = sigma;
    model.centers = draw_centers(evaluation, config.num_centers, config.seed);

    const Eigen::MatrixXd phi_r = gaussian_design_matrix(reference, model.centers, sigma);
    const Eigen::MatrixXd phi_e = gaussian_design_matrix(evaluation, model.centers, sigma);
    model.theta = rulsif_solve(phi_e, phi_r, lambda);
    return model;
}

Eigen::VectorXd kernel_predict(const KernelModel& model, const Eigen::MatrixXd& samples) {
    if (samples.cols() != model.centers.cols())
        throw std::invalid_argument("kernel_predict: dimension mismatch");
    return gaussian_design_matrix(samples, model.centers, model.sigma) * model.theta;
}

void save_kernel_model(const KernelModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_kernel_model: cannot open " + path);
    char buf[64];
    out << "drcpd-kernel 1\n";
    out << "method " << kernel_method_name(model.method) << '\n';
    std::snprintf(buf, sizeof buf, "%a", model.sigma);
    out << "sigma " << buf << '\n';
    out << "centers " << model.centers.rows() << ' ' << model.centers.cols() << '\n';
    for (Eigen::Index i = 0; i < model.centers.rows(); ++i)
        for (Eigen::Index j = 0; j < model.centers.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%a", model.centers(i, j));
            out << buf << (j + 1 == model.centers.cols() ? '\n' : ' ');
        }
    out << "theta " << model.theta.size() << '\n';
    for (Eigen::Index i = 0; i < model.theta.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", model.theta(i));
        out << buf << (i + 1 == model.theta.size() ? '\n' : ' ');
    }
    if (!out) throw std::runtime_error("save_kernel_model: write failed for " + path);
}

KernelModel load_kernel_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_kernel_model: cannot open " + path);
    std::string magic, tag, cell;
    int version = 0;
    in >> magic >> version;
    if (magic != "drcpd-kernel" || version != 1)
        throw std::runtime_error("load_kernel_model: unrecognized header in " + path);

    KernelModel model;
    in >> tag >> cell;
    if (tag != "method") throw std::runtime_error("load_kernel_model: bad method record");
    model.method = kernel_method_from_name(cell);

    in >> tag >> cell;
    if (tag != "sigma") throw std::runtime_error("load_kernel_model: bad sigma record");
    model.sigma = std::strtod(cell.c_str(), nullptr);

    Eigen::Index rows = 0, cols = 0;
    in >> tag >> rows >> cols;
    if (tag != "centers" || rows < 1 || cols < 1)
        throw std::runtime_error("load_kernel_model: bad centers record");
    model.centers.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            in >> cell;
            model.centers(i, j) = std::strtod(cell.c_str(), nullptr);
        }

    Eigen::Index b = 0;
    in >> tag >> b;
    if (tag != "theta" || b != rows)
        throw std::runtime_error("load_kernel_model: bad theta record");
    model.theta.resize(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        in >> cell;
        model.theta(i) = std::strtod(cell.c_str(), nullptr);
    }
    if (!in) throw std::runtime_error("load_kernel_model: truncated file " + path);
    return model;
}

} // namespace drcpd
