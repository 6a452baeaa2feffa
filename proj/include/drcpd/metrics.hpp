#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Turns a per-sample density ratio trace into a point prediction by fitting a
// rising logistic curve, then scores predictions against ground truth with the
// average detection lag and a bootstrap spread over per-series lags.

namespace drcpd {

struct RatioTrace {
    std::string series_id;
    std::vector<double> values; // estimated ratios, one per evaluation index
    std::int64_t offset = 0;    // original-series index of values[0]
};

struct LogisticFit {
    double k = 0.0;         // steepness, > 0
    double x0 = 0.0;        // midpoint, original-series index units
    double norm_floor = 0.0; // min subtracted before fitting
    double norm_scale = 1.0; // range divided out before fitting
    double residual = 0.0;  // sum of squared errors of the normalized fit
};

struct AdlSummary {
    std::vector<double> per_series_lags;
    double mean = 0.0;
    double median = 0.0;
    int bootstrap_runs = 0;
    std::vector<double> bootstrap_means;
    double q1 = 0.0;
    double q3 = 0.0;
};

// Centered moving average; width 1 returns the input, edges use the shrunken
// window that fits. Width must be odd and >= 1.
std::vector<double> smooth_trace(const std::vector<double>& values, int width);

// Fits y(t) = 1 / (1 + exp(-k (t - x0))) to the min-max normalized trace by
// least squares: exhaustive (x0, k) grid, then damped Gauss-Newton refinement.
// Throws "no transition signal" on a constant trace.
LogisticFit fit_logistic(const RatioTrace& trace, int smooth_width = 5);

// round(x0) clamped into [offset, offset + length - 1].
std::int64_t extract_change_point(const RatioTrace& trace, int smooth_width = 5);

// (1/N) sum |truth_i - prediction_i|, in sample-index units.
double average_detection_lag(const std::vector<std::int64_t>& truths,
                             const std::vector<std::int64_t>& predictions);

// Resamples the lag vector with replacement `runs` times; quartiles are
// linear-interpolation quantiles of the run means.
AdlSummary bootstrap_adl(const std::vector<double>& per_series_lags, int runs,
                         std::uint64_t seed);

// Linear-interpolation quantile of a sorted copy of `values`, q in [0, 1].
double quantile(std::vector<double> values, double q);

} // namespace drcpd
