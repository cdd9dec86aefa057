#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rangead/dataset.hpp"
#include "rangead/matrix.hpp"
#include "rangead/mlp.hpp"

namespace rangead {

/// Borders at the sigma- and (1 - sigma)-quantiles. sigma in [0, 0.5).
struct Quantile {
    double sigma = 0.01;
    bool operator==(const Quantile&) const = default;
};

/// Quartiles widened by t times the interquartile range. t >= 0.
struct QuartileIqr {
    double t = 0.1;
    bool operator==(const QuartileIqr&) const = default;
};

/// Minimum and maximum widened by t times their range. t >= 0.
struct MinMaxRange {
    double t = 0.1;
    bool operator==(const MinMaxRange&) const = default;
};

using BorderMethod = std::variant<Quantile, QuartileIqr, MinMaxRange>;

/// Throws ConfigError when the method parameter is outside its domain.
void validate(const BorderMethod& method);
/// "quantile", "quartile_iqr" or "min_max_range".
std::string method_name(const BorderMethod& method);
double method_parameter(const BorderMethod& method);
BorderMethod make_border_method(const std::string& name, double parameter);

/// Linear-interpolation quantile of ascending `sorted` values:
/// h = p (n - 1), result v[floor h] + (h - floor h)(v[floor h + 1] - v[floor h]),
/// capped at v[floor h + 1].
double quantile(std::span<const double> sorted, double p);

/// Closed interval [lo, hi] of normal pre-activations of one neuron.
struct NeuronInterval {
    std::size_t layer = 0;
    std::size_t neuron = 0;
    double lo = 0.0;
    double hi = 0.0;

    bool operator==(const NeuronInterval&) const = default;
};

/// Interval of every neuron of the monitored hidden layers.
class ActivationRanges {
public:
    /// `intervals` must hold exactly one entry per (monitored layer, neuron),
    /// neurons of a layer numbered 0..width-1; ordering is normalized.
    ActivationRanges(BorderMethod method, std::vector<std::size_t> monitored_layers,
                     std::vector<NeuronInterval> intervals);

    const BorderMethod& method() const noexcept { return method_; }
    /// Ascending.
    const std::vector<std::size_t>& monitored_layers() const noexcept { return layers_; }
    /// Sorted by layer, then neuron index.
    const std::vector<NeuronInterval>& intervals() const noexcept { return intervals_; }
    std::size_t total_neurons() const noexcept { return intervals_.size(); }
    std::size_t layer_width(std::size_t position) const { return widths_.at(position); }

    /// Throws ShapeError unless every monitored layer exists in `model` with the recorded width.
    void check_compatible(const MlpModel& model) const;

    bool operator==(const ActivationRanges&) const = default;

private:
    BorderMethod method_;
    std::vector<std::size_t> layers_;
    std::vector<std::size_t> widths_;
    std::vector<NeuronInterval> intervals_;
};

/// Records the pre-activations of `prep` (normal rows only) with one forward
/// pass per row and derives each neuron's interval with `method`.
ActivationRanges extract_ranges(const MlpModel& model, const Matrix& prep,
                                std::span<const std::size_t> monitored_layers, const BorderMethod& method);
ActivationRanges extract_ranges(const MlpModel& model, const Dataset& prep,
                                std::span<const std::size_t> monitored_layers, const BorderMethod& method);

/// Indices of all hidden layers of `model`.
std::vector<std::size_t> all_hidden_layers(const MlpModel& model);

/// Number of monitored neurons whose pre-activation lies strictly outside its interval.
std::size_t score(const MlpModel& model, const ActivationRanges& ranges, std::span<const double> x);

struct ScoreReport {
    std::vector<std::size_t> scores;
    std::optional<double> threshold;
    std::optional<std::vector<AnomalyFlag>> decisions;

    std::vector<double> real_scores() const { return {scores.begin(), scores.end()}; }
};

/// score() for every row of `xs`, in order. Rows are spread over `threads`
/// workers; the result does not depend on the worker count.
ScoreReport score_batch(const MlpModel& model, const ActivationRanges& ranges, const Matrix& xs,
                        std::size_t threads = 1);

/// fraction * total monitored neurons, fraction in (0, 1).
double threshold_by_neuron_fraction(const ActivationRanges& ranges, double fraction);

/// (1 - contamination)-quantile of the scores, contamination in (0, 1).
double threshold_by_contamination(std::span<const double> scores, double contamination);

/// +1 (anomaly) where score > threshold, else -1.
std::vector<AnomalyFlag> decide(std::span<const double> scores, double threshold);

/// Sets the threshold and decisions of `report`.
void apply_threshold(ScoreReport& report, double threshold);

std::string ranges_to_json(const ActivationRanges& ranges);
ActivationRanges ranges_from_json(const std::string& text);
void save_ranges(const ActivationRanges& ranges, const std::filesystem::path& path);
ActivationRanges load_ranges(const std::filesystem::path& path);

}  // namespace rangead
