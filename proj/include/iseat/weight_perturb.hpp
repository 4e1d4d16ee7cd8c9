#pragma once

#include <cmath>
#include <string>

#include "iseat/errors.hpp"
#include "iseat/model.hpp"

namespace iseat {

struct WeightPerturbConfig {
    double gamma = 0.0;  // relative strength; step size ρ is fixed to γ
    int steps = 1;

    void validate(const std::string& path) const {
        if (!(gamma >= 0)) throw ConfigError(path + ".gamma", "must be >= 0");
        if (steps < 1) throw ConfigError(path + ".steps", "must be >= 1");
    }
};

// Layer-structured weight perturbation. One block per (weight matrix, bias)
// pair; norms are ℓ2 over the whole block.
template <typename T>
using WeightPerturbation = ParamBlocks<T>;

template <typename T>
double layer_norm(const Layer<T>& l) {
    double s = 0;
    for (const T v : l.weight.values()) s += static_cast<double>(v) * static_cast<double>(v);
    for (const T v : l.bias.values()) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

// Layer-wise relative projection: rescale any block with ‖v_n‖ > γ‖θ_n‖ down to
// norm γ‖θ_n‖, leave the rest untouched. A zero-norm parameter block forces
// v_n = 0 (degenerate rule).
template <typename T>
WeightPerturbation<T> project_layerwise(WeightPerturbation<T> v, const ModelParams<T>& theta,
                                        double gamma) {
    v.check_aligned(theta);
    if (!(gamma >= 0)) throw ConfigError("wp.gamma", "must be >= 0");
    for (std::size_t n = 0; n < v.layers.size(); ++n) {
        const double vn = layer_norm(v.layers[n]);
        const double tn = layer_norm(theta.layers[n]);
        if (vn == 0.0) continue;
        if (tn == 0.0) {
            for (auto& x : v.layers[n].weight.values()) x = T(0);
            for (auto& x : v.layers[n].bias.values()) x = T(0);
            continue;
        }
        const double bound = gamma * tn;
        if (vn > bound) {
            const T s = static_cast<T>(bound / vn);
            for (auto& x : v.layers[n].weight.values()) x *= s;
            for (auto& x : v.layers[n].bias.values()) x *= s;
        }
    }
    return v;
}

// One-step direction from a precomputed loss gradient g:
// v_n = γ · g_n/‖g_n‖ · ‖θ_n‖ per layer block; zero-gradient blocks stay zero.
// The construction already satisfies the projection bound, so project_layerwise
// is a no-op on the result.
template <typename T>
WeightPerturbation<T> awp_from_gradient(const ParamBlocks<T>& grad, const ModelParams<T>& theta,
                                        double gamma) {
    grad.check_aligned(theta);
    WeightPerturbation<T> v = WeightPerturbation<T>::zeros_like(theta);
    if (gamma == 0.0) return v;
    for (std::size_t n = 0; n < v.layers.size(); ++n) {
        const double gn = layer_norm(grad.layers[n]);
        if (gn == 0.0) continue;
        const double tn = layer_norm(theta.layers[n]);
        const T s = static_cast<T>(gamma * tn / gn);
        for (std::size_t i = 0; i < v.layers[n].weight.size(); ++i)
            v.layers[n].weight[i] = s * grad.layers[n].weight[i];
        for (std::size_t i = 0; i < v.layers[n].bias.size(); ++i)
            v.layers[n].bias[i] = s * grad.layers[n].bias[i];
        if (!v.layers[n].weight.all_finite() || !v.layers[n].bias.all_finite())
            throw NumericError("awp direction non-finite at layer " + std::to_string(n));
    }
    return project_layerwise(std::move(v), theta, gamma);
}

// Adversarial weight perturbation for a batch whose inputs are already the
// attacked points x+δ. Maximizes the mean adversarial loss; one gradient step
// by default, PGD-on-weights with step ρ=γ and projection each step otherwise.
template <typename T>
WeightPerturbation<T> awp_direction(const ModelParams<T>& params, const Tensor<T>& adv_inputs,
                                    const std::vector<int>& labels,
                                    const WeightPerturbConfig& cfg) {
    cfg.validate("wp");
    if (labels.empty()) throw ShapeError("awp_direction: empty batch");
    if (cfg.gamma == 0.0) return WeightPerturbation<T>::zeros_like(params);

    const ParamBlocks<T> g0 = param_gradient(params, adv_inputs, labels);
    WeightPerturbation<T> v = awp_from_gradient(g0, params, cfg.gamma);
    for (int s = 1; s < cfg.steps; ++s) {
        ModelParams<T> perturbed = params;
        add_in_place(perturbed, v);
        const ParamBlocks<T> g = param_gradient(perturbed, adv_inputs, labels);
        const WeightPerturbation<T> step = awp_from_gradient(g, params, cfg.gamma);
        for (std::size_t n = 0; n < v.layers.size(); ++n) {
            for (std::size_t i = 0; i < v.layers[n].weight.size(); ++i)
                v.layers[n].weight[i] += step.layers[n].weight[i];
            for (std::size_t i = 0; i < v.layers[n].bias.size(); ++i)
                v.layers[n].bias[i] += step.layers[n].bias[i];
        }
        v = project_layerwise(std::move(v), params, cfg.gamma);
    }
    return v;
}

template <typename T>
void add_in_place(ModelParams<T>& theta, const WeightPerturbation<T>& v) {
    v.check_aligned(theta);
    for (std::size_t n = 0; n < theta.layers.size(); ++n) {
        for (std::size_t i = 0; i < theta.layers[n].weight.size(); ++i)
            theta.layers[n].weight[i] += v.layers[n].weight[i];
        for (std::size_t i = 0; i < theta.layers[n].bias.size(); ++i)
            theta.layers[n].bias[i] += v.layers[n].bias[i];
    }
}

// θ′ = θ + v by value; the caller keeps θ for the exact restore.
template <typename T>
ModelParams<T> apply(const ModelParams<T>& theta, const WeightPerturbation<T>& v) {
    ModelParams<T> out = theta;
    add_in_place(out, v);
    return out;
}

// Scoped apply/revert: stores θ on construction and restores the stored copy
// (bit-identical, never recomputed by subtraction) on destruction.
template <typename T>
class ScopedPerturbation {
public:
    ScopedPerturbation(ModelParams<T>& theta, const WeightPerturbation<T>& v)
        : target_(theta), original_(theta) {
        add_in_place(target_, v);
    }
    ~ScopedPerturbation() { target_ = original_; }

    ScopedPerturbation(const ScopedPerturbation&) = delete;
    ScopedPerturbation& operator=(const ScopedPerturbation&) = delete;

    const ModelParams<T>& original() const { return original_; }

private:
    ModelParams<T>& target_;
    ModelParams<T> original_;
};

}  // namespace iseat
