#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rangead/rangead.hpp"

namespace rangead::cli {

enum class ThresholdMode { none, neuron_fraction, contamination };

/// Fully resolved settings of one pipeline run. The defaults follow the
/// tabular protocol: two hidden layers of 100 units, 500 epochs at lr 0.001,
/// sigma = 0.01 quantile borders, every hidden layer monitored.
struct RunConfig {
    /// Synthetic blobs are used when empty.
    std::string csv_path;
    CsvOptions csv;
    /// `synth.seed` is ignored; the run seed drives data generation.
    SynthParams synth;

    double test_fraction = 0.3;
    std::vector<std::size_t> hidden_sizes{100, 100};
    std::size_t epochs = 500;
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    BorderMethod border = Quantile{0.01};
    /// Empty means every hidden layer.
    std::vector<std::size_t> monitored_layers;
    ThresholdMode threshold_mode = ThresholdMode::none;
    /// Neuron fraction or contamination, depending on threshold_mode.
    double threshold_value = 0.1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::size_t knn_k = kDefaultKnnK;

    TrainConfig train_config() const { return {epochs, learning_rate, batch_size, seed}; }
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Normalized train/prep/test partitions shared by every stage of a run.
struct PreparedData {
    Split split;
    NormalizationStats stats;
};

/// Loads or synthesizes the dataset, splits it with the run seed and
/// z-scores all partitions with train statistics.
PreparedData prepare_data(const RunConfig& config);

struct RunResult {
    EvalReport report;
    MlpModel model;
    ActivationRanges ranges;
    ScoreReport scores;
    double test_accuracy = 0.0;
};

/// Train, extract ranges on the prep set, score the test set.
RunResult run_pipeline(const RunConfig& config, const PreparedData& data);

/// Scores `model` with freshly extracted ranges; no timing, no artifacts.
struct Evaluation {
    double auc_roc = 0.0;
    std::optional<double> threshold;
    std::optional<double> fpr;
};
Evaluation evaluate_model(const RunConfig& config, const PreparedData& data, const MlpModel& model,
                          const BorderMethod& border);

/// run_pipeline plus artifacts (config.json, model.json, ranges.json,
/// scores.csv, report.json) under `out_dir` when given.
RunResult cmd_run(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct SizeRow {
    std::size_t hidden_size = 0;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double auc_mean = 0.0;
    double auc_std = 0.0;
    std::size_t repeats = 0;
};

/// Every hidden layer set to each size in turn; `repeats` model seeds
/// (seed, seed + 1, ...) on one shared split. Standard deviations are sample
/// standard deviations.
std::vector<SizeRow> cmd_ablate_size(const RunConfig& config, std::span<const std::size_t> sizes,
                                     std::size_t repeats = 5);

struct EpochRow {
    std::size_t epoch = 0;
    double auc_roc = 0.0;
    double test_accuracy = 0.0;
};

/// Trains max(checkpoints) epochs and evaluates after each listed epoch;
/// epoch 0 is the untrained model.
std::vector<EpochRow> cmd_ablate_epochs(const RunConfig& config, std::span<const std::size_t> checkpoints);

struct BorderRow {
    BorderMethod method;
    double auc_roc = 0.0;
    /// On test normals, threshold = 10% of the monitored neurons.
    double fpr = 0.0;
    /// Same threshold, on the prep set itself.
    double prep_fpr = 0.0;
};

inline constexpr double kBorderAblationFraction = 0.10;

/// One shared model; Quantile rows for each sigma, then QuartileIqr and
/// MinMaxRange rows for each t.
std::vector<BorderRow> cmd_ablate_borders(const RunConfig& config, std::span<const double> sigmas,
                                          std::span<const double> ts);

/// kNN (k = config.knn_k) on the normalized train split, scored on the same
/// test split and timed like cmd_run.
EvalReport cmd_baseline(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string size_table_csv(std::span<const SizeRow> rows);
std::string epoch_table_csv(std::span<const EpochRow> rows);
std::string border_table_csv(std::span<const BorderRow> rows);

/// sample_id,score,flag,label with flag the decision (0 without threshold)
/// and label the ground truth.
std::string scores_csv(const ScoreReport& scores, std::span<const AnomalyFlag> labels);
std::string scores_csv(std::span<const double> scores, std::span<const AnomalyFlag> labels);

/// 2 for configuration and shape errors, 3 for data errors, 4 for numeric failures.
int exit_code(const Error& err);

}  // namespace rangead::cli
