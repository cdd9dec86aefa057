#include "rangead/range_detector.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rangead/error.hpp"

namespace rangead {

namespace {

constexpr std::size_t kChunkRows = 256;

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

NeuronInterval interval_of(std::span<const double> sorted, const BorderMethod& method) {
    return std::visit(
        Overloaded{
            [&](const Quantile& m) {
                return NeuronInterval{0, 0, quantile(sorted, m.sigma), quantile(sorted, 1.0 - m.sigma)};
            },
            [&](const QuartileIqr& m) {
                const double q1 = quantile(sorted, 0.25);
                const double q3 = quantile(sorted, 0.75);
                const double iqr = q3 - q1;
                return NeuronInterval{0, 0, q1 - m.t * iqr, q3 + m.t * iqr};
            },
            [&](const MinMaxRange& m) {
                const double lo = sorted.front();
                const double hi = sorted.back();
                const double range = hi - lo;
                return NeuronInterval{0, 0, lo - m.t * range, hi + m.t * range};
            },
        },
        method);
}

std::vector<std::size_t> normalized_layers(const MlpModel& model, std::span<const std::size_t> layers) {
    if (layers.empty()) {
        throw ConfigError("at least one layer must be monitored");
    }
    std::vector<std::size_t> out(layers.begin(), layers.end());
    std::ranges::sort(out);
    if (std::ranges::adjacent_find(out) != out.end()) {
        throw ConfigError("monitored layers contain duplicates");
    }
    if (out.back() >= model.num_hidden()) {
        throw ConfigError("layer " + std::to_string(out.back()) + " is not a hidden layer (model has " +
                          std::to_string(model.num_hidden()) + ")");
    }
    return out;
}

void check_finite_rows(const Matrix& xs) {
    for (std::size_t r = 0; r < xs.rows(); ++r) {
        for (const double v : xs.row(r)) {
            if (!std::isfinite(v)) {
                throw DataError("row " + std::to_string(r) + " contains non-finite values");
            }
        }
    }
}

// Flattened interval bounds in monitored-layer order.
struct Bounds {
    std::vector<double> lo;
    std::vector<double> hi;
};

Bounds bounds_of(const ActivationRanges& ranges) {
    Bounds b;
    b.lo.reserve(ranges.total_neurons());
    b.hi.reserve(ranges.total_neurons());
    for (const auto& iv : ranges.intervals()) {
        b.lo.push_back(iv.lo);
        b.hi.push_back(iv.hi);
    }
    return b;
}

void score_rows(const MlpModel& model, const ActivationRanges& ranges, const Bounds& bounds, const Matrix& xs,
                std::size_t first, std::size_t rows, std::size_t* out) {
    const auto& layers = ranges.monitored_layers();
    const BatchTrace trace = model.forward_batch(xs, first, rows, layers.back() + 1);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t count = 0;
        std::size_t offset = 0;
        for (const std::size_t layer : layers) {
            const auto pre = trace.preactivations[layer].row(r);
            const double* lo = bounds.lo.data() + offset;
            const double* hi = bounds.hi.data() + offset;
            for (std::size_t i = 0; i < pre.size(); ++i) {
                count += static_cast<std::size_t>(pre[i] < lo[i] || pre[i] > hi[i]);
            }
            offset += pre.size();
        }
        out[r] = count;
    }
}

}  // namespace

void validate(const BorderMethod& method) {
    std::visit(Overloaded{
                   [](const Quantile& m) {
                       if (!(m.sigma >= 0.0 && m.sigma < 0.5)) {
                           throw ConfigError("quantile sigma must lie in [0, 0.5)");
                       }
                   },
                   [](const QuartileIqr& m) {
                       if (!(m.t >= 0.0 && std::isfinite(m.t))) {
                           throw ConfigError("quartile IQR fraction t must be finite and non-negative");
                       }
                   },
                   [](const MinMaxRange& m) {
                       if (!(m.t >= 0.0 && std::isfinite(m.t))) {
                           throw ConfigError("min-max range fraction t must be finite and non-negative");
                       }
                   },
               },
               method);
}

std::string method_name(const BorderMethod& method) {
    return std::visit(Overloaded{
                          [](const Quantile&) { return std::string("quantile"); },
                          [](const QuartileIqr&) { return std::string("quartile_iqr"); },
                          [](const MinMaxRange&) { return std::string("min_max_range"); },
                      },
                      method);
}

double method_parameter(const BorderMethod& method) {
    return std::visit(Overloaded{
                          [](const Quantile& m) { return m.sigma; },
                          [](const QuartileIqr& m) { return m.t; },
                          [](const MinMaxRange& m) { return m.t; },
                      },
                      method);
}

BorderMethod make_border_method(const std::string& name, double parameter) {
    BorderMethod method;
    if (name == "quantile") {
        method = Quantile{parameter};
    } else if (name == "quartile_iqr" || name == "iqr") {
        method = QuartileIqr{parameter};
    } else if (name == "min_max_range" || name == "minmax") {
        method = MinMaxRange{parameter};
    } else {
        throw ConfigError("unknown border method '" + name + "'");
    }
    validate(method);
    return method;
}

double quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) {
        throw DataError("quantile of an empty sample");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("quantile level must lie in [0, 1]");
    }
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(h));
    if (below + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(below);
    // Rounding of the difference could otherwise overshoot the next order statistic.
    return std::min(sorted[below] + frac * (sorted[below + 1] - sorted[below]), sorted[below + 1]);
}

ActivationRanges::ActivationRanges(BorderMethod method, std::vector<std::size_t> monitored_layers,
                                   std::vector<NeuronInterval> intervals)
    : method_(method), layers_(std::move(monitored_layers)), intervals_(std::move(intervals)) {
    validate(method_);
    if (layers_.empty()) {
        throw ConfigError("ranges must cover at least one layer");
    }
    std::ranges::sort(layers_);
    if (std::ranges::adjacent_find(layers_) != layers_.end()) {
        throw ConfigError("monitored layers contain duplicates");
    }
    const auto position = [&](std::size_t layer) {
        const auto it = std::ranges::find(layers_, layer);
        if (it == layers_.end()) {
            throw ConfigError("interval refers to unmonitored layer " + std::to_string(layer));
        }
        return static_cast<std::size_t>(it - layers_.begin());
    };
    for (const auto& iv : intervals_) {
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi) {
            throw ConfigError("interval of layer " + std::to_string(iv.layer) + " neuron " +
                              std::to_string(iv.neuron) + " is not a finite [lo, hi] with lo <= hi");
        }
        position(iv.layer);
    }
    std::ranges::sort(intervals_, [&](const NeuronInterval& a, const NeuronInterval& b) {
        const auto pa = position(a.layer);
        const auto pb = position(b.layer);
        return pa != pb ? pa < pb : a.neuron < b.neuron;
    });
    widths_.assign(layers_.size(), 0);
    for (const auto& iv : intervals_) {
        const auto pos = position(iv.layer);
        if (iv.neuron != widths_[pos]) {
            throw ConfigError("layer " + std::to_string(iv.layer) +
                              " intervals must cover consecutive neurons from 0, each exactly once");
        }
        ++widths_[pos];
    }
    for (std::size_t pos = 0; pos < layers_.size(); ++pos) {
        if (widths_[pos] == 0) {
            throw ConfigError("monitored layer " + std::to_string(layers_[pos]) + " has no intervals");
        }
    }
}

void ActivationRanges::check_compatible(const MlpModel& model) const {
    for (std::size_t pos = 0; pos < layers_.size(); ++pos) {
        if (layers_[pos] >= model.num_hidden() || model.hidden_width(layers_[pos]) != widths_[pos]) {
            throw ShapeError("ranges were built for a different architecture: layer " +
                             std::to_string(layers_[pos]) + " has " + std::to_string(widths_[pos]) +
                             " intervals");
        }
    }
}

std::vector<std::size_t> all_hidden_layers(const MlpModel& model) {
    std::vector<std::size_t> layers(model.num_hidden());
    for (std::size_t k = 0; k < layers.size(); ++k) layers[k] = k;
    return layers;
}

ActivationRanges extract_ranges(const MlpModel& model, const Matrix& prep,
                                std::span<const std::size_t> monitored_layers, const BorderMethod& method) {
    validate(method);
    if (prep.rows() == 0) {
        throw DataError("preparation data is empty");
    }
    if (prep.cols() != model.input_dim()) {
        throw ShapeError("preparation data has " + std::to_string(prep.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    check_finite_rows(prep);
    const auto layers = normalized_layers(model, monitored_layers);
    const std::size_t n = prep.rows();

    // Neuron-major copies of the pre-activations: values[pos][neuron * n + row].
    std::vector<std::vector<double>> values(layers.size());
    for (std::size_t pos = 0; pos < layers.size(); ++pos) values[pos].resize(model.hidden_width(layers[pos]) * n);
    for (std::size_t first = 0; first < n; first += kChunkRows) {
        const std::size_t rows = std::min(kChunkRows, n - first);
        const BatchTrace trace = model.forward_batch(prep, first, rows, layers.back() + 1);
        for (std::size_t pos = 0; pos < layers.size(); ++pos) {
            const Matrix& pre = trace.preactivations[layers[pos]];
            for (std::size_t r = 0; r < rows; ++r) {
                const auto row = pre.row(r);
                for (std::size_t i = 0; i < row.size(); ++i) values[pos][i * n + first + r] = row[i];
            }
        }
    }

    std::vector<NeuronInterval> intervals;
    for (std::size_t pos = 0; pos < layers.size(); ++pos) {
        const std::size_t width = model.hidden_width(layers[pos]);
        for (std::size_t i = 0; i < width; ++i) {
            const std::span<double> column(values[pos].data() + i * n, n);
            if (!std::ranges::all_of(column, [](double v) { return std::isfinite(v); })) {
                throw NumericError("layer " + std::to_string(layers[pos]) + " neuron " + std::to_string(i) +
                                   " produced non-finite pre-activations");
            }
            std::ranges::sort(column);
            NeuronInterval iv = interval_of(column, method);
            iv.layer = layers[pos];
            iv.neuron = i;
            intervals.push_back(iv);
        }
    }
    return ActivationRanges(method, layers, std::move(intervals));
}

ActivationRanges extract_ranges(const MlpModel& model, const Dataset& prep,
                                std::span<const std::size_t> monitored_layers, const BorderMethod& method) {
    if (prep.count_anomalies() != 0) {
        throw DataError("preparation data must contain normal rows only");
    }
    return extract_ranges(model, prep.features, monitored_layers, method);
}

std::size_t score(const MlpModel& model, const ActivationRanges& ranges, std::span<const double> x) {
    ranges.check_compatible(model);
    if (x.size() != model.input_dim()) {
        throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    const Matrix row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    check_finite_rows(row);
    std::size_t result = 0;
    score_rows(model, ranges, bounds_of(ranges), row, 0, 1, &result);
    return result;
}

ScoreReport score_batch(const MlpModel& model, const ActivationRanges& ranges, const Matrix& xs,
                        std::size_t threads) {
    ranges.check_compatible(model);
    ScoreReport report;
    if (xs.rows() == 0) return report;
    if (xs.cols() != model.input_dim()) {
        throw ShapeError("input has " + std::to_string(xs.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    check_finite_rows(xs);
    report.scores.resize(xs.rows());
    const Bounds bounds = bounds_of(ranges);
    const std::size_t chunks = (xs.rows() + kChunkRows - 1) / kChunkRows;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t c = next++; c < chunks; c = next++) {
            const std::size_t first = c * kChunkRows;
            const std::size_t rows = std::min(kChunkRows, xs.rows() - first);
            score_rows(model, ranges, bounds, xs, first, rows, report.scores.data() + first);
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, chunks);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    return report;
}

double threshold_by_neuron_fraction(const ActivationRanges& ranges, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("neuron fraction must lie in (0, 1)");
    }
    return fraction * static_cast<double>(ranges.total_neurons());
}

double threshold_by_contamination(std::span<const double> scores, double contamination) {
    if (!(contamination > 0.0 && contamination < 1.0)) {
        throw ConfigError("contamination must lie in (0, 1)");
    }
    if (scores.empty()) {
        throw DataError("contamination threshold of an empty score list");
    }
    std::vector<double> sorted(scores.begin(), scores.end());
    std::ranges::sort(sorted);
    return quantile(sorted, 1.0 - contamination);
}

std::vector<AnomalyFlag> decide(std::span<const double> scores, double threshold) {
    if (!std::isfinite(threshold)) {
        throw ConfigError("decision threshold must be finite");
    }
    std::vector<AnomalyFlag> out;
    out.reserve(scores.size());
    for (const double s : scores) out.push_back(s > threshold ? AnomalyFlag::anomaly : AnomalyFlag::normal);
    return out;
}

void apply_threshold(ScoreReport& report, double threshold) {
    report.decisions = decide(report.real_scores(), threshold);
    report.threshold = threshold;
}

std::string ranges_to_json(const ActivationRanges& ranges) {
    nlohmann::json doc;
    doc["method"] = {{"name", method_name(ranges.method())}, {"parameter", method_parameter(ranges.method())}};
    doc["monitored_layers"] = ranges.monitored_layers();
    auto& intervals = doc["intervals"] = nlohmann::json::array();
    for (const auto& iv : ranges.intervals()) {
        intervals.push_back({{"layer", iv.layer}, {"neuron", iv.neuron}, {"lo", iv.lo}, {"hi", iv.hi}});
    }
    return doc.dump();
}

ActivationRanges ranges_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        const auto& m = doc.at("method");
        BorderMethod method = make_border_method(m.at("name").get<std::string>(), m.at("parameter").get<double>());
        std::vector<NeuronInterval> intervals;
        for (const auto& iv : doc.at("intervals")) {
            intervals.push_back({iv.at("layer").get<std::size_t>(), iv.at("neuron").get<std::size_t>(),
                                 iv.at("lo").get<double>(), iv.at("hi").get<double>()});
        }
        return ActivationRanges(method, doc.at("monitored_layers").get<std::vector<std::size_t>>(),
                                std::move(intervals));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed ranges document: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("invalid ranges document: ") + e.what());
    }
}

void save_ranges(const ActivationRanges& ranges, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write ranges file '" + path.string() + "'");
    }
    out << ranges_to_json(ranges) << '\n';
}

ActivationRanges load_ranges(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open ranges file '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return ranges_from_json(buf.str());
}

}  // namespace rangead
