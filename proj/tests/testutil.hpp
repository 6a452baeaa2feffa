#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

// Shared oracles for the test suites: rank correlation, the closed-form
// Gaussian KL divergence, and scalar central differences.

namespace testutil {

inline std::vector<double> ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0; // ties share the mean rank
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

// KL(N(mu0, s0) || N(mu1, s1)), closed form.
inline double gaussian_kl(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& s0,
                          const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1) {
    const auto d = static_cast<double>(mu0.size());
    const Eigen::LLT<Eigen::MatrixXd> llt1(s1);
    const Eigen::MatrixXd s1_inv_s0 = llt1.solve(s0);
    const Eigen::VectorXd diff = mu1 - mu0;
    const double quad = diff.dot(llt1.solve(diff));
    const auto logdet = [](const Eigen::MatrixXd& m) {
        return 2.0 * Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(m).matrixL())
                         .diagonal()
                         .array()
                         .log()
                         .sum();
    };
    return 0.5 * (s1_inv_s0.trace() + quad - d + logdet(s1) - logdet(s0));
}

template <typename F>
double central_diff(F f, Eigen::VectorXd x, Eigen::Index i, double eps) {
    const double saved = x(i);
    x(i) = saved + eps;
    const double plus = f(x);
    x(i) = saved - eps;
    const double minus = f(x);
    return (plus - minus) / (2.0 * eps);
}

} // namespace testutil
