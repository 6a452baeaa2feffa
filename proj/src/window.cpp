#include "drcpd/window.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace drcpd {

namespace {

double l2_cost(const Eigen::MatrixXd& seg) {
    const Eigen::RowVectorXd mean = seg.colwise().mean();
    return (seg.rowwise() - mean).squaredNorm();
}

double l1_cost(const Eigen::MatrixXd& seg) {
    const Eigen::Index m = seg.rows();
    double cost = 0.0;
    std::vector<double> column(static_cast<std::size_t>(m));
    for (Eigen::Index d = 0; d < seg.cols(); ++d) {
        for (Eigen::Index i = 0; i < m; ++i)
            column[static_cast<std::size_t>(i)] = seg(i, d);
        const auto mid = column.size() / 2;
        std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                         column.end());
        double median = column[mid];
        if (column.size() % 2 == 0) {
            const double lower = *std::max_element(
                column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
            median = 0.5 * (median + lower);
        }
        for (Eigen::Index i = 0; i < m; ++i)
            cost += std::abs(seg(i, d) - median);
    }
    return cost;
}

double rbf_cost(const Eigen::MatrixXd& seg, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("segment_cost: rbf_gamma must be > 0");
    const Eigen::Index m = seg.rows();
    double total = static_cast<double>(m); // diagonal terms exp(0)
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j)
            total += 2.0 * std::exp(-gamma * (seg.row(i) - seg.row(j)).squaredNorm());
    return static_cast<double>(m) - total / static_cast<double>(m);
}

// Per-dimension AR(p) least squares with intercept; returns the pooled
// residual sum of squares.
double ar_cost(const Eigen::MatrixXd& seg, int order) {
    if (order < 1) throw std::invalid_argument("segment_cost: ar_order must be >= 1");
    const Eigen::Index m = seg.rows();
    if (m < order + 1)
        throw std::invalid_argument("segment_cost: segment shorter than ar_order + 1");
    const Eigen::Index rows = m - order;
    double rss = 0.0;
    Eigen::MatrixXd design(rows, order + 1);
    Eigen::VectorXd target(rows);
    for (Eigen::Index d = 0; d < seg.cols(); ++d) {
        for (Eigen::Index n = 0; n < rows; ++n) {
            design(n, 0) = 1.0;
            for (int k = 1; k <= order; ++k)
                design(n, k) = seg(n + order - k, d);
            target(n) = seg(n + order, d);
        }
        const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
        rss += (target - design * beta).squaredNorm();
    }
    return rss;
}

} // namespace

double segment_cost(const Eigen::MatrixXd& segment, const CostKind& kind) {
    if (segment.rows() < 2)
        throw std::invalid_argument("segment_cost: segment needs at least 2 samples");
    switch (kind.tag) {
        case CostTag::L2: return l2_cost(segment);
        case CostTag::L1: return l1_cost(segment);
        case CostTag::Rbf: return rbf_cost(segment, kind.rbf_gamma);
        case CostTag::Ar: return ar_cost(segment, kind.ar_order);
    }
    throw std::logic_error("segment_cost: bad tag");
}

double default_rbf_gamma(const Eigen::MatrixXd& samples) {
    const Eigen::Index n = samples.rows();
    if (n < 2) throw std::invalid_argument("default_rbf_gamma: need at least 2 samples");
    std::vector<double> sq;
    sq.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            sq.push_back((samples.row(i) - samples.row(j)).squaredNorm());
    const auto mid = sq.size() / 2;
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
    double median = sq[mid];
    if (sq.size() % 2 == 0) {
        const double lower = *std::max_element(sq.begin(),
                                               sq.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    if (median <= 0.0) return 1.0; // constant series, any bandwidth works
    return 1.0 / (2.0 * median);
}

DiscrepancyTrace discrepancy_trace(const TimeSeriesRecord& record, int half_window,
                                   const CostKind& kind) {
    const auto T = record.length();
    const int min_seg = kind.tag == CostTag::Ar ? kind.ar_order + 1 : 2;
    if (half_window < min_seg)
        throw std::invalid_argument("discrepancy_trace: half_window too small for the cost");
    if (T < 2 * half_window + 1)
        throw std::invalid_argument("discrepancy_trace: series shorter than 2*half_window + 1");

    DiscrepancyTrace trace;
    trace.half_window = half_window;
    const auto w = static_cast<Eigen::Index>(half_window);
    for (Eigen::Index t = w; t < T - w; ++t) {
        const double joint = segment_cost(record.samples.middleRows(t - w, 2 * w), kind);
        const double left = segment_cost(record.samples.middleRows(t - w, w), kind);
        const double right = segment_cost(record.samples.middleRows(t, w), kind);
        trace.values.push_back(joint - left - right);
    }
    return trace;
}

std::int64_t window_detect(const TimeSeriesRecord& record, int half_window,
                           const CostKind& kind) {
    const DiscrepancyTrace trace = discrepancy_trace(record, half_window, kind);
    std::size_t best = 0;
    for (std::size_t i = 1; i < trace.values.size(); ++i)
        if (trace.values[i] > trace.values[best]) best = i;
    return trace.time_of(best);
}

} // namespace drcpd
