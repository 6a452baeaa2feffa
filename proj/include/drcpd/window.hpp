#pragma once

#include "drcpd/series.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <vector>

// Sliding-window change point detection. At each candidate t the discrepancy
// is the cost reduction from splitting the joint window [t-w, t+w) at t; the
// predicted change point is its argmax. Costs: L2 (squared distance to the
// segment mean), L1 (absolute distance to the per-dimension median), RBF
// (kernel spread in feature space), AR (autoregressive residual energy).

namespace drcpd {

enum class CostTag { L1, L2, Rbf, Ar };

struct CostKind {
    CostTag tag = CostTag::L2;
    double rbf_gamma = 1.0; // RBF only
    int ar_order = 1;       // AR only
};

struct DiscrepancyTrace {
    std::vector<double> values; // values[i] is the discrepancy at t = half_window + i
    int half_window = 0;

    int time_of(std::size_t index) const { return half_window + static_cast<int>(index); }
};

// Segment rows are consecutive samples. Requires m >= 2 (AR: m >= order + 1).
double segment_cost(const Eigen::MatrixXd& segment, const CostKind& kind);

// gamma = 1 / (2 * median pairwise squared distance) over the whole series.
double default_rbf_gamma(const Eigen::MatrixXd& samples);

// Candidate split points t run over [w, T - w); windows are half-open.
DiscrepancyTrace discrepancy_trace(const TimeSeriesRecord& record, int half_window,
                                   const CostKind& kind);

// Argmax of the trace, earliest index on ties.
std::int64_t window_detect(const TimeSeriesRecord& record, int half_window,
                           const CostKind& kind);

} // namespace drcpd
