#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "rangead/dataset.hpp"

namespace rangead {

/// Probability that a random anomaly outscores a random normal sample, ties
/// counted as one half (Mann-Whitney U / (n_pos n_neg), average ranks).
/// Requires both labels to be present.
double auc_roc(std::span<const double> scores, std::span<const AnomalyFlag> labels);

/// Fraction of normal samples with score strictly above `threshold`.
double fpr_at_threshold(std::span<const double> scores, std::span<const AnomalyFlag> labels, double threshold);

struct PhaseTimes {
    double prepare_seconds = 0.0;
    double inference_seconds = 0.0;
};

/// Wall-clock seconds of `prepare` and of `infer`, best of `repetitions` runs
/// each, on a monotonic clock. All prepare runs finish before inference is timed.
PhaseTimes time_phases(const std::function<void()>& prepare, const std::function<void()>& infer,
                       int repetitions = 3);

struct EvalReport {
    std::string method;
    double auc_roc = 0.0;
    std::optional<double> threshold;
    std::optional<double> fpr;
    double prepare_seconds = 0.0;
    double inference_seconds = 0.0;
    std::size_t n_test = 0;
    std::size_t n_anomalies = 0;
};

/// Keys that hold wall-clock measurements in report_to_json output.
inline constexpr const char* kTimingKeys[] = {"prepare_seconds", "inference_seconds"};

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
/// Two-column plain-text table for terminals.
std::string render_report(const EvalReport& report);

}  // namespace rangead
