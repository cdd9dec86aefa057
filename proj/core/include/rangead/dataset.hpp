#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rangead/matrix.hpp"

namespace rangead {

/// Ground-truth or predicted anomaly label.
enum class AnomalyFlag : std::int8_t { normal = -1, anomaly = 1 };

/// Class label carried by anomaly rows, which belong to no normal class.
inline constexpr int kNoClass = -1;

/// Feature matrix with per-row class labels and anomaly flags.
///
/// Normal rows carry a dense class index in [0, num_classes()); anomaly rows
/// carry kNoClass. `class_names[c]` is the source label of class c.
struct Dataset {
    Matrix features;
    std::vector<int> class_labels;
    std::vector<AnomalyFlag> anomaly_flags;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return features.rows(); }
    std::size_t dims() const noexcept { return features.cols(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::size_t count_anomalies() const;

    /// Rows `indices` in order; class names and feature names are kept.
    Dataset select(std::span<const std::size_t> indices) const;

    /// Throws DataError if shapes disagree, values are non-finite, or labels are inconsistent.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

struct CsvOptions {
    std::string label_column = "label";
    std::string anomaly_label = "anomaly";
};

/// Reads a comma-separated file with a header row. Every column except the
/// label column must be numeric and finite. Rows labelled `anomaly_label` are
/// flagged as anomalies; the remaining labels are indexed in sorted order.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

/// Writes `data` in the format load_csv reads, floats in shortest round-trip form.
void write_csv(const Dataset& data, const std::filesystem::path& path, const CsvOptions& options = {});
std::string format_csv(const Dataset& data, const CsvOptions& options = {});

/// Per-feature z-score statistics. Zero standard deviations are stored as 1.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool operator==(const NormalizationStats&) const = default;
};

/// Population mean and standard deviation of every feature of `train`.
NormalizationStats normalize(const Dataset& train);
Dataset apply_normalization(const NormalizationStats& stats, const Dataset& data);

/// Partition used for evaluation: train and prep hold normal rows only, test
/// holds the held-out normals followed by every anomaly row.
struct Split {
    Dataset train;
    Dataset prep;
    Dataset test;
};

/// Splits normals into train/test by `seed`; anomalies all go to the test set.
/// The prep set equals the train set.
Split split_protocol(const Dataset& data, double test_fraction, std::uint64_t seed);

struct SynthParams {
    std::size_t n_per_class = 250;
    std::size_t num_classes = 4;
    std::size_t dims = 30;
    std::size_t anomaly_n = 100;
    double anomaly_shift = 10.0;
    std::uint64_t seed = 0;
};

/// Gaussian blobs: each normal class is N(c_k, I) with |c_k| = 3 and c_k
/// orthogonal to a held-out unit direction u. Anomalies are drawn from the
/// normal mixture and translated by anomaly_shift * u.
Dataset synth_blobs(const SynthParams& params);

}  // namespace rangead
