#include "drcpd/metrics.hpp"
#include "drcpd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drcpd {

std::vector<double> smooth_trace(const std::vector<double>& values, int width) {
    if (width < 1 || width % 2 == 0)
        throw std::invalid_argument("smooth_trace: width must be odd and >= 1");
    if (width == 1) return values;
    const int n = static_cast<int>(values.size());
    const int half = width / 2;
    std::vector<double> out(values.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) sum += values[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logistic_sse(const std::vector<double>& y, double k, double x0) {
    double sse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = sigmoid(k * (static_cast<double>(i) - x0)) - y[i];
        sse += e * e;
    }
    return sse;
}

// Damped Gauss-Newton on (k, x0); steps that raise the error are retried with
// heavier damping. k stays strictly positive.
void refine_logistic(const std::vector<double>& y, double& k, double& x0, double& sse) {
    double mu = 1e-3;
    for (int it = 0; it < 200; ++it) {
        double jkk = 0.0, jkx = 0.0, jxx = 0.0, gk = 0.0, gx = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double t = static_cast<double>(i);
            const double s = sigmoid(k * (t - x0));
            const double r = s - y[i];
            const double ds = s * (1.0 - s);
            const double jk = ds * (t - x0);
            const double jx = -ds * k;
            jkk += jk * jk;
            jkx += jk * jx;
            jxx += jx * jx;
            gk += jk * r;
            gx += jx * r;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 12; ++attempt, mu *= 10.0) {
            const double a = jkk + mu, b = jkx, c = jxx + mu;
            const double det = a * c - b * b;
            if (det <= 0.0) continue;
            const double dk = (-gk * c + gx * b) / det;
            const double dx = (-gx * a + gk * b) / det;
            double k_new = k + dk;
            const double x_new = x0 + dx;
            if (k_new <= 0.0) k_new = 0.5 * k;
            const double sse_new = logistic_sse(y, k_new, x_new);
            if (sse_new < sse) {
                const double gain = sse - sse_new;
                k = k_new;
                x0 = x_new;
                sse = sse_new;
                mu = std::max(mu * 0.1, 1e-12);
                stepped = true;
                if (gain < 1e-15) return;
                break;
            }
        }
        if (!stepped) return;
        mu = std::min(mu, 1e6);
    }
}

} // namespace

LogisticFit fit_logistic(const RatioTrace& trace, int smooth_width) {
    if (trace.values.size() < 4)
        throw std::invalid_argument("fit_logistic: trace needs at least 4 values");
    const std::vector<double> smoothed = smooth_trace(trace.values, smooth_width);

    const auto [min_it, max_it] = std::minmax_element(smoothed.begin(), smoothed.end());
    const double floor = *min_it;
    const double scale = *max_it - floor;
    if (scale <= 0.0)
        throw std::runtime_error("fit_logistic: no transition signal (constant trace)");

    std::vector<double> y(smoothed.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (smoothed[i] - floor) / scale;

    // Coarse grid: every index as x0 candidate, log-spaced steepness.
    const int n = static_cast<int>(y.size());
    std::vector<double> k_grid;
    for (int j = 0; j < 25; ++j)
        k_grid.push_back(std::pow(10.0, -2.0 + 4.0 * j / 24.0));

    double best_k = k_grid[0], best_x0 = 0.0;
    double best_sse = logistic_sse(y, best_k, best_x0);
    for (int xi = 0; xi < n; ++xi)
        for (double k : k_grid) {
            const double sse = logistic_sse(y, k, static_cast<double>(xi));
            if (sse < best_sse) {
                best_sse = sse;
                best_k = k;
                best_x0 = static_cast<double>(xi);
            }
        }

    refine_logistic(y, best_k, best_x0, best_sse);
    best_x0 = std::clamp(best_x0, 0.0, static_cast<double>(n - 1));

    LogisticFit fit;
    fit.k = best_k;
    fit.x0 = best_x0 + static_cast<double>(trace.offset);
    fit.norm_floor = floor;
    fit.norm_scale = scale;
    fit.residual = best_sse;
    return fit;
}

std::int64_t extract_change_point(const RatioTrace& trace, int smooth_width) {
    const LogisticFit fit = fit_logistic(trace, smooth_width);
    const auto last = trace.offset + static_cast<std::int64_t>(trace.values.size()) - 1;
    const auto rounded = static_cast<std::int64_t>(std::llround(fit.x0));
    return std::clamp(rounded, trace.offset, last);
}

double average_detection_lag(const std::vector<std::int64_t>& truths,
                             const std::vector<std::int64_t>& predictions) {
    if (truths.size() != predictions.size())
        throw std::invalid_argument("average_detection_lag: length mismatch");
    if (truths.empty())
        throw std::invalid_argument("average_detection_lag: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i)
        sum += static_cast<double>(std::llabs(truths[i] - predictions[i]));
    return sum / static_cast<double>(truths.size());
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

AdlSummary bootstrap_adl(const std::vector<double>& per_series_lags, int runs,
                         std::uint64_t seed) {
    if (per_series_lags.empty())
        throw std::invalid_argument("bootstrap_adl: empty lag vector");
    if (runs < 1)
        throw std::invalid_argument("bootstrap_adl: runs must be >= 1");

    AdlSummary summary;
    summary.per_series_lags = per_series_lags;
    double sum = 0.0;
    for (double lag : per_series_lags) sum += lag;
    summary.mean = sum / static_cast<double>(per_series_lags.size());
    summary.bootstrap_runs = runs;

    Rng rng(seed);
    const std::size_t n = per_series_lags.size();
    summary.bootstrap_means.reserve(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += per_series_lags[rng.below(n)];
        summary.bootstrap_means.push_back(s / static_cast<double>(n));
    }
    summary.median = quantile(summary.bootstrap_means, 0.5);
    summary.q1 = quantile(summary.bootstrap_means, 0.25);
    summary.q3 = quantile(summary.bootstrap_means, 0.75);
    return summary;
}

} // namespace drcpd
