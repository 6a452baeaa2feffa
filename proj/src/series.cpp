#include "drcpd/series.hpp"
#include "drcpd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace drcpd {

namespace {

std::string file_stem(const fs::path& p) { return p.stem().string(); }

std::vector<double> parse_csv_row(const std::string& line, const std::string& file,
                                  std::size_t row) {
    std::vector<double> values;
    std::size_t col = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t end = line.find(',', start);
        if (end == std::string::npos) end = line.size();
        std::string cell = line.substr(start, end - start);
        // Trim surrounding whitespace and a possible trailing \r.
        while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.pop_back();
        std::size_t lead = 0;
        while (lead < cell.size() && std::isspace(static_cast<unsigned char>(cell[lead]))) ++lead;
        cell.erase(0, lead);
        ++col;
        if (cell.empty()) {
            throw std::invalid_argument(file + ": empty cell at row " + std::to_string(row) +
                                        ", column " + std::to_string(col));
        }
        char* parse_end = nullptr;
        double v = std::strtod(cell.c_str(), &parse_end);
        if (parse_end != cell.c_str() + cell.size()) {
            throw std::invalid_argument(file + ": non-numeric cell '" + cell + "' at row " +
                                        std::to_string(row) + ", column " + std::to_string(col));
        }
        values.push_back(v);
        if (end == line.size()) break;
        start = end + 1;
    }
    return values;
}

TimeSeriesRecord load_one_csv(const fs::path& file, bool has_header) {
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("cannot open " + file.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && has_header) continue;
        if (line.empty() || line == "\r") continue;
        rows.push_back(parse_csv_row(line, file.string(), lineno));
        if (rows.size() > 1 && rows.back().size() != rows.front().size()) {
            throw std::invalid_argument(file.string() + ": inconsistent column count at row " +
                                        std::to_string(lineno) + " (got " +
                                        std::to_string(rows.back().size()) + ", expected " +
                                        std::to_string(rows.front().size()) + ")");
        }
    }
    if (rows.empty()) throw std::invalid_argument(file.string() + ": no rows");

    TimeSeriesRecord rec;
    rec.id = file_stem(file);
    rec.samples.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            rec.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return rec;
}

void apply_metadata(TimeSeriesRecord& rec, const json& meta) {
    if (!meta.contains(rec.id)) return;
    const json& entry = meta.at(rec.id);
    if (entry.contains("change_point")) rec.true_change_point = entry.at("change_point").get<std::int64_t>();
    if (entry.contains("sample_rate")) rec.sample_rate = entry.at("sample_rate").get<double>();
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void validate_record(const TimeSeriesRecord& record) {
    if (record.length() < 2)
        throw std::invalid_argument("series '" + record.id + "': need at least 2 time steps");
    if (record.dim() < 1)
        throw std::invalid_argument("series '" + record.id + "': need at least 1 dimension");
    if (!record.samples.allFinite())
        throw std::invalid_argument("series '" + record.id + "': non-finite sample value");
    if (record.true_change_point) {
        const std::int64_t tau = *record.true_change_point;
        if (tau <= 0 || tau >= record.length())
            throw std::invalid_argument("series '" + record.id + "': change point " +
                                        std::to_string(tau) + " out of range (0, " +
                                        std::to_string(record.length()) + ")");
    }
}

Dataset load_csv_dataset(const std::string& path, bool has_header,
                         const std::string& metadata_path) {
    fs::path p(path);
    if (!fs::exists(p)) throw std::invalid_argument("no such path: " + path);

    std::vector<fs::path> files;
    fs::path meta_file;
    if (fs::is_directory(p)) {
        for (const auto& entry : fs::directory_iterator(p))
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        meta_file = p / "metadata.json";
    } else {
        files.push_back(p);
        meta_file = p.parent_path() / "metadata.json";
    }
    if (!metadata_path.empty()) meta_file = fs::path(metadata_path);
    if (files.empty()) throw std::invalid_argument("no .csv files under " + path);

    json meta = json::object();
    if (fs::exists(meta_file)) {
        std::ifstream min(meta_file);
        try {
            min >> meta;
        } catch (const json::exception& e) {
            throw std::invalid_argument(meta_file.string() + ": " + e.what());
        }
    } else if (!metadata_path.empty()) {
        throw std::invalid_argument("no such metadata file: " + metadata_path);
    }

    Dataset ds;
    for (const auto& f : files) {
        TimeSeriesRecord rec = load_one_csv(f, has_header);
        apply_metadata(rec, meta);
        validate_record(rec);
        if (!ds.records.empty() && rec.dim() != ds.dim())
            throw std::invalid_argument("series '" + rec.id + "' has " + std::to_string(rec.dim()) +
                                        " columns, dataset has " + std::to_string(ds.dim()));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

void save_csv_dataset(const Dataset& dataset, const std::string& directory) {
    fs::create_directories(directory);
    json meta = json::object();
    for (const auto& rec : dataset.records) {
        std::ofstream out(fs::path(directory) / (rec.id + ".csv"));
        if (!out) throw std::runtime_error("cannot write " + directory + "/" + rec.id + ".csv");
        for (Eigen::Index i = 0; i < rec.samples.rows(); ++i) {
            for (Eigen::Index j = 0; j < rec.samples.cols(); ++j) {
                if (j) out << ',';
                out << fmt_double(rec.samples(i, j));
            }
            out << '\n';
        }
        json entry = json::object();
        if (rec.true_change_point) entry["change_point"] = *rec.true_change_point;
        if (rec.sample_rate) entry["sample_rate"] = *rec.sample_rate;
        if (!entry.empty()) meta[rec.id] = entry;
    }
    std::ofstream mout(fs::path(directory) / "metadata.json");
    mout << meta.dump(2) << '\n';
}

SplitSpec split_reference_evaluation(const Dataset& dataset, double ref_fraction) {
    if (!(ref_fraction > 0.0 && ref_fraction < 1.0))
        throw std::invalid_argument("ref_fraction must be in (0,1)");
    SplitSpec split;
    for (const auto& rec : dataset.records) {
        const auto boundary = static_cast<std::int64_t>(
            std::floor(ref_fraction * static_cast<double>(rec.length())));
        if (boundary < 1)
            throw std::invalid_argument("series '" + rec.id + "' too short for ref_fraction " +
                                        std::to_string(ref_fraction));
        split.first_evaluation_index[rec.id] = boundary;
        split.reference_count += boundary;
        split.evaluation_count += rec.length() - boundary;
    }
    return split;
}

std::pair<Dataset, Dataset> train_test_partition(const Dataset& dataset,
                                                 double test_fraction,
                                                 std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("test_fraction must be in (0,1)");
    const std::size_t n = dataset.records.size();
    const auto n_test = static_cast<std::size_t>(
        std::floor(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test == n)
        throw std::invalid_argument("test_fraction " + std::to_string(test_fraction) +
                                    " leaves an empty partition for " + std::to_string(n) +
                                    " series");

    Rng rng(seed);
    std::vector<std::size_t> order = rng.permutation(n);
    std::vector<bool> is_test(n, false);
    for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

    Dataset train, test;
    train.role = DatasetRole::Train;
    test.role = DatasetRole::Test;
    for (std::size_t i = 0; i < n; ++i)
        (is_test[i] ? test : train).records.push_back(dataset.records[i]);
    return {std::move(train), std::move(test)};
}

FeatureSeries window_features(const TimeSeriesRecord& record,
                              std::int64_t window_length, std::int64_t hop) {
    if (window_length < 3) throw std::invalid_argument("window_length must be >= 3");
    if (hop < 1) throw std::invalid_argument("hop must be >= 1");
    const std::int64_t T = record.length();
    const std::int64_t d = record.dim();
    if (window_length > T)
        throw std::invalid_argument("window longer than series '" + record.id + "'");

    const std::int64_t n_windows = (T - window_length) / hop + 1;
    FeatureSeries out;
    out.source_id = record.id;
    out.window_length = window_length;
    out.hop = hop;
    out.windows.resize(n_windows, 3 * d);

    for (std::int64_t w = 0; w < n_windows; ++w) {
        const std::int64_t start = w * hop;
        for (std::int64_t c = 0; c < d; ++c) {
            double energy = 0.0, teager = 0.0, line = 0.0;
            for (std::int64_t n_i = 0; n_i < window_length; ++n_i) {
                const double x = record.samples(start + n_i, c);
                energy += x * x;
                if (n_i > 0) line += std::abs(x - record.samples(start + n_i - 1, c));
                if (n_i > 0 && n_i + 1 < window_length)
                    teager += x * x - record.samples(start + n_i - 1, c) *
                                          record.samples(start + n_i + 1, c);
            }
            out.windows(w, 3 * c + 0) = energy / static_cast<double>(window_length);
            out.windows(w, 3 * c + 1) = teager / static_cast<double>(window_length - 2);
            out.windows(w, 3 * c + 2) = line;
        }
    }
    return out;
}

} // namespace drcpd
