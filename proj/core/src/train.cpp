#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "rangead/error.hpp"
#include "rangead/mlp.hpp"

namespace rangead {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Params {
    std::vector<RowMatrix> w;
    std::vector<Eigen::VectorXd> b;
};

Params params_of(const MlpModel& model) {
    Params p;
    for (const auto& layer : model.layers()) {
        const auto& m = layer.weights;
        p.w.emplace_back(Eigen::Map<const RowMatrix>(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                                                     static_cast<Eigen::Index>(m.cols())));
        p.b.emplace_back(Eigen::Map<const Eigen::VectorXd>(layer.bias.data(),
                                                           static_cast<Eigen::Index>(layer.bias.size())));
    }
    return p;
}

Params zeros_like(const Params& p) {
    Params z;
    for (std::size_t k = 0; k < p.w.size(); ++k) {
        z.w.push_back(RowMatrix::Zero(p.w[k].rows(), p.w[k].cols()));
        z.b.push_back(Eigen::VectorXd::Zero(p.b[k].size()));
    }
    return z;
}

MlpModel model_of(const Params& p, const MlpModel& like) {
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k < p.w.size(); ++k) {
        const auto& w = p.w[k];
        DenseLayer layer{Matrix(static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()),
                                std::vector<double>(w.data(), w.data() + w.size())),
                         std::vector<double>(p.b[k].data(), p.b[k].data() + p.b[k].size())};
        layers.push_back(std::move(layer));
    }
    return MlpModel(like.specs(), like.seed(), std::move(layers));
}

// Mean softmax cross-entropy over the rows of x and, if grad is non-null, its
// gradient with respect to every parameter.
double loss_and_gradient(const Params& p, const RowMatrix& x, std::span<const int> labels, Params* grad) {
    const std::size_t n_layers = p.w.size();
    const auto batch = static_cast<double>(x.rows());
    std::vector<RowMatrix> pre(n_layers);
    std::vector<RowMatrix> act(n_layers);  // act[k] is the input of layer k
    act[0] = x;
    for (std::size_t k = 0; k < n_layers; ++k) {
        pre[k].noalias() = act[k] * p.w[k].transpose();
        pre[k].rowwise() += p.b[k].transpose();
        if (k + 1 < n_layers) act[k + 1] = pre[k].cwiseMax(0.0);
    }

    RowMatrix& logits = pre.back();
    RowMatrix probs(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double peak = logits.row(r).maxCoeff();
        probs.row(r) = (logits.row(r).array() - peak).exp().matrix();
        const double sum = probs.row(r).sum();
        const double lse = peak + std::log(sum);
        loss += lse - logits(r, labels[static_cast<std::size_t>(r)]);
        probs.row(r) /= sum;
    }
    loss /= batch;
    if (grad == nullptr) return loss;

    RowMatrix delta = probs;
    for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    delta /= batch;
    for (std::size_t k = n_layers; k-- > 0;) {
        grad->w[k].noalias() = delta.transpose() * act[k];
        grad->b[k] = delta.colwise().sum().transpose();
        if (k == 0) break;
        RowMatrix upstream = delta * p.w[k];
        delta = upstream.cwiseProduct((pre[k - 1].array() > 0.0).cast<double>().matrix());
    }
    return loss;
}

void check_labels(const MlpModel& model, std::span<const int> labels) {
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= model.num_classes()) {
            throw DataError("row " + std::to_string(r) + " has label " + std::to_string(labels[r]) +
                            " outside [0, " + std::to_string(model.num_classes()) + ")");
        }
    }
}

}  // namespace

double cross_entropy(const MlpModel& model, const Matrix& x, std::span<const int> labels, Gradients* grads) {
    if (x.rows() == 0) {
        throw DataError("cross-entropy of an empty batch");
    }
    if (x.cols() != model.input_dim() || labels.size() != x.rows()) {
        throw ShapeError("batch shape does not match the model or the label count");
    }
    check_labels(model, labels);
    const Params p = params_of(model);
    const RowMatrix xm = Eigen::Map<const RowMatrix>(x.values().data(), static_cast<Eigen::Index>(x.rows()),
                                                     static_cast<Eigen::Index>(x.cols()));
    if (grads == nullptr) return loss_and_gradient(p, xm, labels, nullptr);

    Params g = zeros_like(p);
    const double loss = loss_and_gradient(p, xm, labels, &g);
    grads->weights.clear();
    grads->biases.clear();
    for (std::size_t k = 0; k < g.w.size(); ++k) {
        grads->weights.emplace_back(static_cast<std::size_t>(g.w[k].rows()), static_cast<std::size_t>(g.w[k].cols()),
                                    std::vector<double>(g.w[k].data(), g.w[k].data() + g.w[k].size()));
        grads->biases.emplace_back(g.b[k].data(), g.b[k].data() + g.b[k].size());
    }
    return loss;
}

MlpModel train(const MlpModel& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (data.size() == 0) {
        throw DataError("cannot train on an empty dataset");
    }
    if (data.count_anomalies() != 0) {
        throw DataError("training data must contain normal rows only");
    }
    if (data.dims() != model.input_dim()) {
        throw ShapeError("training data has " + std::to_string(data.dims()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    if (!(cfg.learning_rate > 0.0) || cfg.batch_size == 0) {
        throw ConfigError("learning rate must be positive and batch size at least 1");
    }
    check_labels(model, data.class_labels);
    if (cfg.epochs == 0) return model;

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEpsilon = 1e-8;

    Params p = params_of(model);
    Params grad = zeros_like(p);
    Params m = zeros_like(p);
    Params v = zeros_like(p);

    const std::size_t n = data.size();
    const std::size_t d = data.dims();
    std::vector<std::size_t> order(n);
    std::vector<int> batch_labels;
    RowMatrix batch_x;
    std::uint64_t step = 0;

    const auto adam = [&](auto& param, const auto& g, auto& m1, auto& m2, double c1, double c2) {
        m1 = kBeta1 * m1 + (1.0 - kBeta1) * g;
        m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.cwiseProduct(g);
        param.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kEpsilon);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::mt19937_64 rng(cfg.seed + epoch);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t rows = std::min(cfg.batch_size, n - start);
            batch_x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
            batch_labels.resize(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const auto src = data.features.row(order[start + r]);
                std::copy(src.begin(), src.end(), batch_x.row(static_cast<Eigen::Index>(r)).data());
                batch_labels[r] = data.class_labels[order[start + r]];
            }
            const double loss = loss_and_gradient(p, batch_x, batch_labels, &grad);
            if (!std::isfinite(loss)) {
                throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch + 1));
            }
            ++step;
            const double t = static_cast<double>(step);
            const double c1 = 1.0 - std::pow(kBeta1, t);
            const double c2 = 1.0 - std::pow(kBeta2, t);
            for (std::size_t k = 0; k < p.w.size(); ++k) {
                adam(p.w[k], grad.w[k], m.w[k], v.w[k], c1, c2);
                adam(p.b[k], grad.b[k], m.b[k], v.b[k], c1, c2);
            }
        }
        if (on_epoch) on_epoch(epoch + 1, model_of(p, model));
    }
    return model_of(p, model);
}

}  // namespace rangead
