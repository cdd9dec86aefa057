#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rangead/dataset.hpp"
#include "rangead/matrix.hpp"

namespace rangead {

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    bool operator==(const LayerSpec&) const = default;
};

/// Builds the chain input -> hidden... -> classes.
std::vector<LayerSpec> mlp_specs(std::size_t input_dim, std::span<const std::size_t> hidden_sizes,
                                 std::size_t num_classes);

/// Dense layer with a row-major [output_dim x input_dim] weight matrix.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Output of a single forward pass.
struct ForwardTrace {
    std::vector<double> logits;
    /// One entry per hidden layer, values before the ReLU.
    std::vector<std::vector<double>> preactivations;
};

/// Output of a batched forward pass; row r of every matrix belongs to input row r.
struct BatchTrace {
    std::vector<Matrix> preactivations;
    Matrix logits;
};

/// Multilayer perceptron: ReLU between hidden layers, identity on the output
/// layer (softmax is applied by the loss). Immutable once constructed, so
/// forward passes may run concurrently.
class MlpModel {
public:
    /// Validates that the layer shapes match `specs` and all parameters are finite.
    MlpModel(std::vector<LayerSpec> specs, std::uint64_t seed, std::vector<DenseLayer> layers);

    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    std::size_t input_dim() const noexcept { return specs_.front().input_dim; }
    std::size_t num_classes() const noexcept { return specs_.back().output_dim; }
    std::size_t num_hidden() const noexcept { return specs_.size() - 1; }
    std::size_t hidden_width(std::size_t k) const { return specs_.at(k).output_dim; }

    ForwardTrace forward(std::span<const double> x) const;

    /// Forward pass over `rows` consecutive rows of `xs` starting at `first`.
    /// Only the first `depth` layers are evaluated; logits are filled when
    /// depth covers the output layer. Every value is bitwise identical to
    /// what forward() produces for the same row.
    BatchTrace forward_batch(const Matrix& xs, std::size_t first, std::size_t rows, std::size_t depth) const;
    BatchTrace forward_batch(const Matrix& xs) const { return forward_batch(xs, 0, xs.rows(), specs_.size()); }

    bool operator==(const MlpModel& other) const {
        return specs_ == other.specs_ && seed_ == other.seed_ && layers_ == other.layers_;
    }

private:
    std::vector<LayerSpec> specs_;
    std::uint64_t seed_ = 0;
    std::vector<DenseLayer> layers_;
    // Transposed weights, [input_dim x output_dim], used by the forward kernel.
    std::vector<std::vector<double>> transposed_;
};

/// He-uniform initialization (U(-sqrt(6/fan_in), sqrt(6/fan_in))), zero biases.
MlpModel init_model(std::vector<LayerSpec> specs, std::uint64_t seed);

struct TrainConfig {
    std::size_t epochs = 500;
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
};

/// Called after each completed epoch (1-based) with the current model.
using EpochCallback = std::function<void(std::size_t epoch, const MlpModel& model)>;

/// Mini-batch Adam on mean softmax cross-entropy. The rows of every epoch are
/// visited in a Fisher-Yates order seeded by cfg.seed + epoch index.
MlpModel train(const MlpModel& model, const Dataset& data, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

/// Gradients of the loss with the same layout as the model parameters.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

/// Mean softmax cross-entropy of `model` over the rows of `x`. Fills `grads`
/// when non-null. This is the routine train() differentiates.
double cross_entropy(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                     Gradients* grads = nullptr);

/// Fraction of rows whose arg-max logit (lowest index on ties) equals the class label.
double predict_accuracy(const MlpModel& model, const Dataset& data);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace rangead
