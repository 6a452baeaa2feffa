#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Data model for labeled multichannel time series: CSV ingestion with a
// metadata sidecar, train/test partitioning, reference/evaluation splitting,
// and windowed energy features.

namespace drcpd {

// One multichannel series; rows are time steps, columns are channels.
struct TimeSeriesRecord {
    std::string id;
    Eigen::MatrixXd samples;                 // T x d
    std::optional<std::int64_t> true_change_point; // 0 < tau < T when present
    std::optional<double> sample_rate;       // samples per second

    std::int64_t length() const { return samples.rows(); }
    std::int64_t dim() const { return samples.cols(); }
};

enum class DatasetRole { Train, Test };

struct Dataset {
    std::vector<TimeSeriesRecord> records;
    DatasetRole role = DatasetRole::Train;

    std::int64_t dim() const { return records.empty() ? 0 : records.front().dim(); }
};

// Reference/evaluation boundaries: for each series the index of its first
// evaluation sample; everything before is labeled reference (state A).
struct SplitSpec {
    std::int64_t reference_count = 0;  // pooled n_r
    std::int64_t evaluation_count = 0; // pooled n_e
    std::map<std::string, std::int64_t> first_evaluation_index;
};

// Sliding-window energy features: one row per window, 3 features per channel
// in channel-major order [avg_energy_c, teager_kaiser_c, line_length_c].
struct FeatureSeries {
    std::string source_id;
    Eigen::MatrixXd windows; // n_windows x 3d
    std::int64_t window_length = 0;
    std::int64_t hop = 0;
};

// Validates the record invariants (T >= 2, d >= 1, finite samples, tau in
// range); throws std::invalid_argument naming the offending series.
void validate_record(const TimeSeriesRecord& record);

// Loads one series per CSV file. `path` may be a single .csv file or a
// directory of them (read in filename order); the series id is the file stem.
// Change points and sample rates come from a JSON sidecar mapping
// id -> {"change_point": int, "sample_rate": real}; pass an explicit sidecar
// path or leave empty to pick up "metadata.json" next to the data if present.
Dataset load_csv_dataset(const std::string& path, bool has_header,
                         const std::string& metadata_path = "");

// Writes a dataset back out: one <id>.csv per series plus metadata.json.
void save_csv_dataset(const Dataset& dataset, const std::string& directory);

// First floor(ref_fraction * T) samples of every series become reference.
SplitSpec split_reference_evaluation(const Dataset& dataset, double ref_fraction);

// Disjoint, exhaustive partition of records into (train, test); deterministic
// per seed. floor(test_fraction * N) records, at least one per side.
std::pair<Dataset, Dataset> train_test_partition(const Dataset& dataset,
                                                 double test_fraction,
                                                 std::uint64_t seed);

// Per window w and channel c:
//   average energy    = mean(x^2)
//   Teager-Kaiser     = mean over interior n of x[n]^2 - x[n-1]*x[n+1]
//   line-length       = sum |x[n] - x[n-1]|
FeatureSeries window_features(const TimeSeriesRecord& record,
                              std::int64_t window_length, std::int64_t hop);

} // namespace drcpd
