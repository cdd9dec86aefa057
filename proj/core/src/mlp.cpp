#include "rangead/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "rangead/error.hpp"

namespace rangead {

namespace {

void check_specs(const std::vector<LayerSpec>& specs) {
    if (specs.size() < 2) {
        throw ShapeError("a model needs at least one hidden layer and an output layer");
    }
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (specs[k].input_dim == 0 || specs[k].output_dim == 0) {
            throw ShapeError("layer " + std::to_string(k) + " has a zero dimension");
        }
        if (k + 1 < specs.size() && specs[k].output_dim != specs[k + 1].input_dim) {
            throw ShapeError("layer " + std::to_string(k) + " outputs " + std::to_string(specs[k].output_dim) +
                             " values but layer " + std::to_string(k + 1) + " expects " +
                             std::to_string(specs[k + 1].input_dim));
        }
    }
}

// Computes out[r][j] = bias[j] + sum_i in[r][i] * w[j][i] with wt holding w
// transposed. Each output is accumulated in increasing i starting from the
// bias whatever the tiling, so results do not depend on how rows are batched.
typedef double Lanes __attribute__((vector_size(4 * sizeof(double)), aligned(sizeof(double)), may_alias));
constexpr std::size_t kLanes = 4;
constexpr std::size_t kVectors = 4;  // vectors per tile row
constexpr std::size_t kTileCols = kVectors * kLanes;
constexpr std::size_t kTileRows = 6;

template <std::size_t R>
void dense_tile(const double* wt, const double* bias, std::size_t in_dim, std::size_t out_dim, const double* in,
                double* out) {
    Lanes acc[R][kVectors];
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t v = 0; v < kVectors; ++v) acc[r][v] = *reinterpret_cast<const Lanes*>(bias + v * kLanes);
    }
    for (std::size_t i = 0; i < in_dim; ++i) {
        const double* w = wt + i * out_dim;
        Lanes wv[kVectors];
        for (std::size_t v = 0; v < kVectors; ++v) wv[v] = *reinterpret_cast<const Lanes*>(w + v * kLanes);
        for (std::size_t r = 0; r < R; ++r) {
            const double x = in[r * in_dim + i];
            for (std::size_t v = 0; v < kVectors; ++v) acc[r][v] += x * wv[v];
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t v = 0; v < kVectors; ++v) *reinterpret_cast<Lanes*>(out + r * out_dim + v * kLanes) = acc[r][v];
    }
}

void dense_forward(const std::vector<double>& wt, const std::vector<double>& bias, std::size_t in_dim,
                   std::size_t out_dim, const double* in, std::size_t rows, double* out) {
    std::size_t j = 0;
    // Column slabs outermost so a slab of wt stays cached across all rows.
    for (; j + kTileCols <= out_dim; j += kTileCols) {
        std::size_t r = 0;
        for (; r + kTileRows <= rows; r += kTileRows) {
            dense_tile<kTileRows>(wt.data() + j, bias.data() + j, in_dim, out_dim, in + r * in_dim, out + r * out_dim + j);
        }
        for (; r < rows; ++r) {
            dense_tile<1>(wt.data() + j, bias.data() + j, in_dim, out_dim, in + r * in_dim, out + r * out_dim + j);
        }
    }
    for (; j < out_dim; ++j) {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = bias[j];
            for (std::size_t i = 0; i < in_dim; ++i) acc += in[r * in_dim + i] * wt[i * out_dim + j];
            out[r * out_dim + j] = acc;
        }
    }
}

}  // namespace

std::vector<LayerSpec> mlp_specs(std::size_t input_dim, std::span<const std::size_t> hidden_sizes,
                                 std::size_t num_classes) {
    std::vector<LayerSpec> specs;
    std::size_t prev = input_dim;
    for (const std::size_t h : hidden_sizes) {
        specs.push_back({prev, h});
        prev = h;
    }
    specs.push_back({prev, num_classes});
    return specs;
}

MlpModel::MlpModel(std::vector<LayerSpec> specs, std::uint64_t seed, std::vector<DenseLayer> layers)
    : specs_(std::move(specs)), seed_(seed), layers_(std::move(layers)) {
    check_specs(specs_);
    if (layers_.size() != specs_.size()) {
        throw ShapeError("model has " + std::to_string(layers_.size()) + " layers but " +
                         std::to_string(specs_.size()) + " specs");
    }
    transposed_.reserve(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& spec = specs_[k];
        const auto& layer = layers_[k];
        if (layer.weights.rows() != spec.output_dim || layer.weights.cols() != spec.input_dim ||
            layer.bias.size() != spec.output_dim) {
            throw ShapeError("layer " + std::to_string(k) + " parameters do not match its spec");
        }
        const auto finite = [](double v) { return std::isfinite(v); };
        if (!std::ranges::all_of(layer.weights.values(), finite) || !std::ranges::all_of(layer.bias, finite)) {
            throw NumericError("layer " + std::to_string(k) + " has non-finite parameters");
        }
        std::vector<double> wt(spec.input_dim * spec.output_dim);
        for (std::size_t j = 0; j < spec.output_dim; ++j) {
            for (std::size_t i = 0; i < spec.input_dim; ++i) wt[i * spec.output_dim + j] = layer.weights(j, i);
        }
        transposed_.push_back(std::move(wt));
    }
}

BatchTrace MlpModel::forward_batch(const Matrix& xs, std::size_t first, std::size_t rows, std::size_t depth) const {
    if (xs.cols() != input_dim()) {
        throw ShapeError("input has " + std::to_string(xs.cols()) + " features, model expects " +
                         std::to_string(input_dim()));
    }
    if (first + rows > xs.rows()) {
        throw ShapeError("row range exceeds the input matrix");
    }
    depth = std::min(depth, specs_.size());

    BatchTrace trace;
    trace.preactivations.reserve(std::min(depth, num_hidden()));
    const double* in = xs.values().data() + first * xs.cols();
    std::vector<double> activations;
    for (std::size_t k = 0; k < depth; ++k) {
        const auto& spec = specs_[k];
        Matrix out(rows, spec.output_dim);
        dense_forward(transposed_[k], layers_[k].bias, spec.input_dim, spec.output_dim, in, rows,
                      out.values().data());
        if (k + 1 == specs_.size()) {
            trace.logits = std::move(out);
            break;
        }
        const auto pre = out.values();
        activations.resize(pre.size());
        std::ranges::transform(pre, activations.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
        in = activations.data();
        trace.preactivations.push_back(std::move(out));
    }
    return trace;
}

ForwardTrace MlpModel::forward(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(input_dim()));
    }
    if (!std::ranges::all_of(x, [](double v) { return std::isfinite(v); })) {
        throw DataError("input contains non-finite values");
    }
    const Matrix row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    BatchTrace batch = forward_batch(row);
    ForwardTrace trace;
    const auto logits = batch.logits.row(0);
    trace.logits.assign(logits.begin(), logits.end());
    for (const auto& pre : batch.preactivations) {
        const auto values = pre.row(0);
        trace.preactivations.emplace_back(values.begin(), values.end());
    }
    return trace;
}

MlpModel init_model(std::vector<LayerSpec> specs, std::uint64_t seed) {
    check_specs(specs);
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (const auto& spec : specs) {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.input_dim));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer{Matrix(spec.output_dim, spec.input_dim), std::vector<double>(spec.output_dim, 0.0)};
        for (double& w : layer.weights.values()) w = dist(rng);
        layers.push_back(std::move(layer));
    }
    return MlpModel(std::move(specs), seed, std::move(layers));
}

double predict_accuracy(const MlpModel& model, const Dataset& data) {
    std::vector<std::size_t> normals;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (data.anomaly_flags[r] == AnomalyFlag::normal) normals.push_back(r);
    }
    if (normals.empty()) {
        throw DataError("accuracy needs at least one labelled row");
    }
    const Matrix xs = data.features.select_rows(normals);
    const BatchTrace trace = model.forward_batch(xs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const auto logits = trace.logits.row(i);
        const auto best = static_cast<int>(std::ranges::max_element(logits) - logits.begin());
        if (best == data.class_labels[normals[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(normals.size());
}

std::string model_to_json(const MlpModel& model) {
    nlohmann::json doc;
    doc["specs"] = nlohmann::json::array();
    for (const auto& s : model.specs()) {
        doc["specs"].push_back({{"input_dim", s.input_dim}, {"output_dim", s.output_dim}});
    }
    doc["seed"] = model.seed();
    doc["layers"] = nlohmann::json::array();
    for (const auto& layer : model.layers()) {
        const auto w = layer.weights.values();
        doc["layers"].push_back({{"w", std::vector<double>(w.begin(), w.end())}, {"b", layer.bias}});
    }
    return doc.dump();
}

MlpModel model_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        std::vector<LayerSpec> specs;
        for (const auto& s : doc.at("specs")) {
            specs.push_back({s.at("input_dim").get<std::size_t>(), s.at("output_dim").get<std::size_t>()});
        }
        const auto& raw_layers = doc.at("layers");
        if (raw_layers.size() != specs.size()) {
            throw ShapeError("model file lists " + std::to_string(raw_layers.size()) + " layers for " +
                             std::to_string(specs.size()) + " specs");
        }
        std::vector<DenseLayer> layers;
        for (std::size_t k = 0; k < specs.size(); ++k) {
            auto w = raw_layers[k].at("w").get<std::vector<double>>();
            if (w.size() != specs[k].input_dim * specs[k].output_dim) {
                throw ShapeError("layer " + std::to_string(k) + " weight array has the wrong length");
            }
            layers.push_back({Matrix(specs[k].output_dim, specs[k].input_dim, std::move(w)),
                              raw_layers[k].at("b").get<std::vector<double>>()});
        }
        return MlpModel(std::move(specs), doc.at("seed").get<std::uint64_t>(), std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write model file '" + path.string() + "'");
    }
    out << model_to_json(model) << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open model file '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace rangead
