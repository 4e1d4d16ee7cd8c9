#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/graph.hpp"
#include "iseat/rng.hpp"
#include "iseat/tensor.hpp"

namespace iseat {

using nd::Activation;
using nd::Graph;
using nd::Tensor;

struct ModelSpec {
    std::vector<std::size_t> widths;  // input d, hidden..., classes C
    Activation activation = Activation::relu;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (widths.size() < 2) throw ShapeError("model needs at least 2 widths");
        for (const std::size_t w : widths)
            if (w < 1) throw ShapeError("model widths must be >= 1");
    }

    std::size_t input_dim() const { return widths.front(); }
    std::size_t num_classes() const { return widths.back(); }
    std::size_t num_layers() const { return widths.size() - 1; }
};

// One dense layer: weight is [in×out] so the forward pass is x·W + b.
template <typename T>
struct Layer {
    Tensor<T> weight;
    Tensor<T> bias;
};

template <typename T>
struct ModelParams {
    ModelSpec spec;
    std::vector<Layer<T>> layers;

    std::size_t layer_count() const { return layers.size(); }

    void check_consistent() const {
        spec.validate();
        if (layers.size() != spec.num_layers())
            throw ShapeError("parameter layer count does not match spec");
        for (std::size_t n = 0; n < layers.size(); ++n) {
            const auto& l = layers[n];
            if (l.weight.shape() != std::vector<std::size_t>{spec.widths[n], spec.widths[n + 1]} ||
                l.bias.shape() != std::vector<std::size_t>{spec.widths[n + 1]})
                throw ShapeError("layer " + std::to_string(n) + " shape inconsistent with spec");
            if (!l.weight.all_finite() || !l.bias.all_finite())
                throw NumericError("layer " + std::to_string(n) + " has non-finite parameters");
        }
    }
};

// Per-layer uniform init in [−1/√fan_in, +1/√fan_in], weights row-major then bias,
// all from one seeded stream.
template <typename T>
ModelParams<T> init_params(const ModelSpec& spec) {
    spec.validate();
    ModelParams<T> p;
    p.spec = spec;
    Rng rng(spec.init_seed);
    for (std::size_t n = 0; n + 1 < spec.widths.size(); ++n) {
        const std::size_t in = spec.widths[n], out = spec.widths[n + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Layer<T> layer{Tensor<T>({in, out}), Tensor<T>({out})};
        for (auto& v : layer.weight.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        for (auto& v : layer.bias.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        p.layers.push_back(std::move(layer));
    }
    return p;
}

struct LabeledBatch {
    // inputs are kept in double regardless of model precision; rows live in [0,1]
    nd::Tensor<double> inputs;  // [m×d]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    void validate(std::size_t expect_dim, std::size_t num_classes) const {
        if (labels.empty()) throw ShapeError("batch must be nonempty");
        if (inputs.rank() != 2 || inputs.rows() != labels.size() || inputs.cols() != expect_dim)
            throw ShapeError("batch inputs " + inputs.shape_str() + " inconsistent with " +
                             std::to_string(labels.size()) + " labels of dim " +
                             std::to_string(expect_dim));
        for (const double v : inputs.values())
            if (!(v >= 0.0 && v <= 1.0))
                throw NumericError("batch input outside [0,1]: " + std::to_string(v));
        for (const int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
                throw ShapeError("label " + std::to_string(y) + " outside [0," +
                                 std::to_string(num_classes) + ")");
    }
};

template <typename T>
Tensor<T> cast_tensor(const nd::Tensor<double>& t) {
    Tensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<T>(t[i]);
    return out;
}

template <typename T>
nd::Tensor<double> to_double(const Tensor<T>& t) {
    nd::Tensor<double> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]);
    return out;
}

// Handles into a forward graph; which leaves were declared as inputs depends on
// the gradients the caller is after.
template <typename T>
struct ForwardHandles {
    typename Graph<T>::NodeId x = 0;
    std::vector<typename Graph<T>::NodeId> weights;
    std::vector<typename Graph<T>::NodeId> biases;
    typename Graph<T>::NodeId logits = 0;
};

template <typename T>
ForwardHandles<T> build_forward(Graph<T>& g, const ModelParams<T>& params, const Tensor<T>& x,
                                bool x_is_input, bool params_are_inputs) {
    if (x.rank() != 2 || x.cols() != params.spec.input_dim())
        throw ShapeError("forward input " + x.shape_str() + " does not match model input dim " +
                         std::to_string(params.spec.input_dim()));
    ForwardHandles<T> h;
    h.x = x_is_input ? g.input(x) : g.constant(x);
    auto cur = h.x;
    for (std::size_t n = 0; n < params.layer_count(); ++n) {
        const auto& l = params.layers[n];
        const auto w = params_are_inputs ? g.input(l.weight) : g.constant(l.weight);
        const auto b = params_are_inputs ? g.input(l.bias) : g.constant(l.bias);
        h.weights.push_back(w);
        h.biases.push_back(b);
        cur = g.add_bias(g.matmul(cur, w), b);
        if (n + 1 < params.layer_count()) cur = g.activation(cur, params.spec.activation);
    }
    h.logits = cur;
    return h;
}

// Logits for a batch: [m×d] -> [m×C].
template <typename T>
Tensor<T> forward_logits(const ModelParams<T>& params, const Tensor<T>& x) {
    Graph<T> g;
    return g.value(build_forward(g, params, x, false, false).logits);
}

template <typename T>
Tensor<T> forward_logits_single(const ModelParams<T>& params, const Tensor<T>& x) {
    Tensor<T> row({1, x.size()}, x.values());
    Tensor<T> out = forward_logits(params, row);
    return Tensor<T>({out.size()}, out.values());
}

// argmax with ties broken by the lowest class index
template <typename T>
int predict_row(const Tensor<T>& logits, std::size_t r) {
    int best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits.at(r, j) > logits.at(r, best)) best = static_cast<int>(j);
    return best;
}

template <typename T>
std::vector<int> predict(const ModelParams<T>& params, const Tensor<T>& x) {
    const Tensor<T> logits = forward_logits(params, x);
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) out[r] = predict_row(logits, r);
    return out;
}

// −log softmax(logits)[y], max-subtracted
template <typename T>
double cross_entropy(const Tensor<T>& logits, int y) {
    if (logits.size() < 2) throw ShapeError("cross_entropy needs C >= 2 logits");
    if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
        throw ShapeError("cross_entropy label out of range");
    T mx = logits[0];
    for (std::size_t j = 1; j < logits.size(); ++j) mx = std::max(mx, logits[j]);
    T sum = 0;
    for (std::size_t j = 0; j < logits.size(); ++j) sum += std::exp(logits[j] - mx);
    return static_cast<double>(std::log(sum) + mx - logits[static_cast<std::size_t>(y)]);
}

template <typename T>
std::vector<double> softmax(const Tensor<T>& logits) {
    T mx = logits[0];
    for (std::size_t j = 1; j < logits.size(); ++j) mx = std::max(mx, logits[j]);
    std::vector<double> p(logits.size());
    double sum = 0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(static_cast<double>(logits[j] - mx));
        sum += p[j];
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Per-row cross-entropy losses of a batch under fixed params (no gradients).
template <typename T>
std::vector<double> batch_losses(const ModelParams<T>& params, const Tensor<T>& x,
                                 const std::vector<int>& labels) {
    Graph<T> g;
    const auto h = build_forward(g, params, x, false, false);
    const auto ce = g.softmax_cross_entropy(h.logits, labels);
    const auto& v = g.value(ce);
    return std::vector<double>(v.values().begin(), v.values().end());
}

template <typename T>
double mean_loss(const ModelParams<T>& params, const Tensor<T>& x,
                 const std::vector<int>& labels) {
    const auto losses = batch_losses(params, x, labels);
    double s = 0;
    for (const double l : losses) s += l;
    return s / static_cast<double>(losses.size());
}

// ∇_x of the summed cross-entropy over the batch rows (per-row gradients are
// independent, so the sum seeds every row with 1).
template <typename T>
Tensor<T> input_gradient(const ModelParams<T>& params, const Tensor<T>& x,
                         const std::vector<int>& labels) {
    Graph<T> g;
    const auto h = build_forward(g, params, x, true, false);
    const auto ce = g.softmax_cross_entropy(h.logits, labels);
    Tensor<T> seed({x.rows()});
    for (auto& v : seed.values()) v = T(1);
    return g.backward(ce, seed)[0];
}

template <typename T>
Tensor<T> input_gradient_single(const ModelParams<T>& params, const Tensor<T>& x, int y) {
    Tensor<T> row({1, x.size()}, x.values());
    Tensor<T> grad = input_gradient(params, row, {y});
    return Tensor<T>({grad.size()}, grad.values());
}

// Structure matching ModelParams, used for gradients and weight perturbations.
template <typename T>
struct ParamBlocks {
    std::vector<Layer<T>> layers;

    static ParamBlocks zeros_like(const ModelParams<T>& p) {
        ParamBlocks out;
        for (const auto& l : p.layers)
            out.layers.push_back({Tensor<T>(l.weight.shape()), Tensor<T>(l.bias.shape())});
        return out;
    }

    void check_aligned(const ModelParams<T>& p) const {
        if (layers.size() != p.layers.size())
            throw ShapeError("parameter block count mismatch");
        for (std::size_t n = 0; n < layers.size(); ++n)
            if (!layers[n].weight.same_shape(p.layers[n].weight) ||
                !layers[n].bias.same_shape(p.layers[n].bias))
                throw ShapeError("parameter block " + std::to_string(n) + " shape mismatch");
    }
};

// ∇_θ of the mean cross-entropy over the batch.
template <typename T>
ParamBlocks<T> param_gradient(const ModelParams<T>& params, const Tensor<T>& x,
                              const std::vector<int>& labels) {
    Graph<T> g;
    const auto h = build_forward(g, params, x, false, true);
    const auto ce = g.softmax_cross_entropy(h.logits, labels);
    const auto loss = g.mean(ce);
    auto grads = g.backward(loss);
    ParamBlocks<T> out;
    for (std::size_t n = 0; n < params.layer_count(); ++n)
        out.layers.push_back({std::move(grads[2 * n]), std::move(grads[2 * n + 1])});
    return out;
}

}  // namespace iseat
