#include "rangead/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "rangead/error.hpp"

namespace rangead {

namespace {

void check_pairs(std::span<const double> scores, std::span<const AnomalyFlag> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("got " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                         " labels");
    }
}

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const AnomalyFlag> labels) {
    check_pairs(scores, labels);
    const std::size_t n = scores.size();
    std::uint64_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i])) {
            throw DataError("score " + std::to_string(i) + " is not finite");
        }
        n_pos += labels[i] == AnomalyFlag::anomaly ? 1 : 0;
    }
    const std::uint64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("AUC-ROC needs at least one anomaly and one normal sample");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the rank sum of the anomalies; a tie block covering 1-based ranks
    // first+1..last gets the average rank (first + last + 1) / 2 per member.
    std::uint64_t rank_sum_x2 = 0;
    std::size_t first = 0;
    while (first < n) {
        std::size_t last = first + 1;
        while (last < n && scores[order[last]] == scores[order[first]]) ++last;
        std::uint64_t block_pos = 0;
        for (std::size_t i = first; i < last; ++i) block_pos += labels[order[i]] == AnomalyFlag::anomaly ? 1 : 0;
        rank_sum_x2 += block_pos * (first + last + 1);
        first = last;
    }
    const std::uint64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double fpr_at_threshold(std::span<const double> scores, std::span<const AnomalyFlag> labels, double threshold) {
    check_pairs(scores, labels);
    std::size_t normals = 0;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != AnomalyFlag::normal) continue;
        ++normals;
        flagged += scores[i] > threshold ? 1 : 0;
    }
    if (normals == 0) {
        throw DataError("false-positive rate needs at least one normal sample");
    }
    return static_cast<double>(flagged) / static_cast<double>(normals);
}

PhaseTimes time_phases(const std::function<void()>& prepare, const std::function<void()>& infer, int repetitions) {
    using Clock = std::chrono::steady_clock;
    const auto best_of = [repetitions](const std::function<void()>& fn) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < std::max(repetitions, 1); ++i) {
            const auto start = Clock::now();
            if (fn) fn();
            best = std::min(best, std::chrono::duration<double>(Clock::now() - start).count());
        }
        return best;
    };
    PhaseTimes times;
    times.prepare_seconds = best_of(prepare);
    times.inference_seconds = best_of(infer);
    return times;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json doc;
    doc["method"] = report.method;
    doc["auc_roc"] = report.auc_roc;
    doc["threshold"] = report.threshold ? nlohmann::ordered_json(*report.threshold) : nullptr;
    doc["fpr"] = report.fpr ? nlohmann::ordered_json(*report.fpr) : nullptr;
    doc["prepare_seconds"] = report.prepare_seconds;
    doc["inference_seconds"] = report.inference_seconds;
    doc["n_test"] = report.n_test;
    doc["n_anomalies"] = report.n_anomalies;
    return doc.dump(2);
}

EvalReport report_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        EvalReport r;
        r.method = doc.at("method").get<std::string>();
        r.auc_roc = doc.at("auc_roc").get<double>();
        if (!doc.at("threshold").is_null()) r.threshold = doc.at("threshold").get<double>();
        if (!doc.at("fpr").is_null()) r.fpr = doc.at("fpr").get<double>();
        r.prepare_seconds = doc.at("prepare_seconds").get<double>();
        r.inference_seconds = doc.at("inference_seconds").get<double>();
        r.n_test = doc.at("n_test").get<std::size_t>();
        r.n_anomalies = doc.at("n_anomalies").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report document: ") + e.what());
    }
}

std::string render_report(const EvalReport& report) {
    std::ostringstream out;
    const auto line = [&out](const std::string& key, const std::string& value) {
        out << std::left << std::setw(20) << key << value << '\n';
    };
    const auto num = [](double v, int precision) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(precision) << v;
        return s.str();
    };
    line("method", report.method);
    line("auc_roc", num(report.auc_roc, 4));
    line("threshold", report.threshold ? num(*report.threshold, 2) : "-");
    line("fpr", report.fpr ? num(*report.fpr, 4) : "-");
    line("prepare_seconds", num(report.prepare_seconds, 6));
    line("inference_seconds", num(report.inference_seconds, 6));
    line("n_test", std::to_string(report.n_test));
    line("n_anomalies", std::to_string(report.n_anomalies));
    return out.str();
}

}  // namespace rangead
