#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/model.hpp"
#include "iseat/rng.hpp"

namespace iseat {

struct AttackConfig {
    double epsilon = 8.0 / 255.0;  // ℓ∞ budget in input-scale units
    int steps = 10;
    double step_size = 2.0 / 255.0;
    bool random_start = true;
    std::uint64_t seed = 0;

    void validate(const std::string& path) const {
        if (!(epsilon >= 0)) throw ConfigError(path + ".epsilon", "must be >= 0");
        if (steps < 1) throw ConfigError(path + ".steps", "must be >= 1");
        if (!(step_size > 0)) throw ConfigError(path + ".step_size", "must be > 0");
    }
};

namespace detail {

template <typename T>
T sign0(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// Clamp delta into the ε-ball first, then into the [0,1] box relative to x.
// Order matters: the box clamp can only shrink magnitudes, so ‖δ‖∞ ≤ ε holds
// exactly afterwards, and x+δ rounds inside [0,1].
template <typename T>
void project_delta(Tensor<T>& delta, const Tensor<T>& x, T eps) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        T d = std::clamp(delta[i], -eps, eps);
        d = std::clamp(d, -x[i], T(1) - x[i]);
        delta[i] = d;
    }
}

}  // namespace detail

template <typename T>
Tensor<T> perturbed_input(const Tensor<T>& x, const Tensor<T>& delta) {
    if (!x.same_shape(delta)) throw ShapeError("perturbation shape mismatch");
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i] + delta[i], T(0), T(1));
    return out;
}

// Single-step sign attack on a batch. δ = ε·sign(∇_x L), recomputed after the
// [0,1] clip so the returned δ is exactly what moves x to the attacked point.
template <typename T>
Tensor<T> fgsm(const ModelParams<T>& params, const Tensor<T>& x, const std::vector<int>& labels,
               double epsilon) {
    if (!(epsilon >= 0)) throw ConfigError("attack.epsilon", "must be >= 0");
    const Tensor<T> grad = input_gradient(params, x, labels);
    const T eps = static_cast<T>(epsilon);
    Tensor<T> delta(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) delta[i] = eps * detail::sign0(grad[i]);
    detail::project_delta(delta, x, eps);
    return delta;
}

// ℓ∞ PGD on a batch; per-row gradients are independent so the whole batch is
// stepped together. Deterministic given (params, x, labels, cfg).
template <typename T>
Tensor<T> pgd(const ModelParams<T>& params, const Tensor<T>& x, const std::vector<int>& labels,
              const AttackConfig& cfg) {
    cfg.validate("attack");
    const T eps = static_cast<T>(cfg.epsilon);
    const T step = static_cast<T>(cfg.step_size);
    Tensor<T> delta(x.shape());
    if (cfg.random_start && cfg.epsilon > 0) {
        Rng rng(cfg.seed);
        for (auto& d : delta.values())
            d = static_cast<T>(rng.uniform(-cfg.epsilon, cfg.epsilon));
        detail::project_delta(delta, x, eps);
    }
    if (cfg.epsilon == 0) return delta;
    for (int s = 0; s < cfg.steps; ++s) {
        const Tensor<T> adv = perturbed_input(x, delta);
        const Tensor<T> grad = input_gradient(params, adv, labels);
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] += step * detail::sign0(grad[i]);
        detail::project_delta(delta, x, eps);
    }
    return delta;
}

struct MarginResult {
    double mu = 0.0;           // smallest flipping lattice point, or mu_max when none flips
    bool flipped = false;
    double direction_norm = 0.0;  // ℓ2 of the supplied δ
};

// Smallest μ on the lattice {Δμ, 2Δμ, ..., μ_max} whose clipped offset along
// δ/‖δ‖₂ changes the prediction. All lattice points are evaluated in one
// forward pass.
template <typename T>
MarginResult margin_search(const ModelParams<T>& params, const Tensor<T>& x,
                           const Tensor<T>& delta, double mu_step = 0.25,
                           double mu_max = 50.0) {
    if (!x.same_shape(delta)) throw ShapeError("margin_search: delta shape mismatch");
    if (!(mu_step > 0) || !(mu_max >= mu_step))
        throw ShapeError("margin_search: need 0 < mu_step <= mu_max");
    const double norm = nd::l2_norm(delta);
    if (norm == 0.0) throw ShapeError("margin_search: zero-norm perturbation");

    MarginResult res;
    res.direction_norm = norm;
    res.mu = mu_max;

    const std::size_t d = x.size();
    const std::size_t count = static_cast<std::size_t>(std::floor(mu_max / mu_step + 1e-9));
    Tensor<T> points({count, d});
    for (std::size_t k = 0; k < count; ++k) {
        const double mu = mu_step * static_cast<double>(k + 1);
        for (std::size_t i = 0; i < d; ++i) {
            const double v = static_cast<double>(x[i]) +
                             mu * static_cast<double>(delta[i]) / norm;
            points.at(k, i) = static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
    }
    Tensor<T> base({1, d}, x.values());
    const int ref = predict(params, base)[0];
    const std::vector<int> preds = predict(params, points);
    for (std::size_t k = 0; k < count; ++k) {
        if (preds[k] != ref) {
            res.mu = mu_step * static_cast<double>(k + 1);
            res.flipped = true;
            break;
        }
    }
    return res;
}

struct LandscapeGrid {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<double> losses;  // row-major [alpha][beta]
    std::uint64_t direction_seed = 0;
    double alpha_budget = 0.0;  // α at which the adversarial offset equals δ itself

    double at(std::size_t i, std::size_t j) const { return losses[i * betas.size() + j]; }
};

// Loss surface along the normalized adversarial direction and a fixed random
// direction drawn once from U(−ε, ε)^d with the given seed.
template <typename T>
LandscapeGrid loss_landscape(const ModelParams<T>& params, const Tensor<T>& x, int y,
                             const Tensor<T>& delta, const std::vector<double>& alphas,
                             const std::vector<double>& betas, double epsilon,
                             std::uint64_t seed) {
    if (!x.same_shape(delta)) throw ShapeError("loss_landscape: delta shape mismatch");
    if (alphas.empty() || betas.empty()) throw ShapeError("loss_landscape: empty grid axes");
    const double dnorm = nd::l2_norm(delta);
    if (dnorm == 0.0) throw ShapeError("loss_landscape: zero-norm adversarial direction");

    const std::size_t d = x.size();
    Rng rng(seed);
    std::vector<double> u(d);
    for (auto& v : u) v = rng.uniform(-epsilon, epsilon);
    double unorm = 0;
    for (const double v : u) unorm += v * v;
    unorm = std::sqrt(unorm);
    if (unorm == 0.0) throw ShapeError("loss_landscape: zero-norm random direction");

    LandscapeGrid grid;
    grid.alphas = alphas;
    grid.betas = betas;
    grid.direction_seed = seed;
    grid.alpha_budget = dnorm;
    grid.losses.resize(alphas.size() * betas.size());

    Tensor<T> points({grid.losses.size(), d});
    std::size_t k = 0;
    for (const double a : alphas) {
        for (const double b : betas) {
            for (std::size_t i = 0; i < d; ++i) {
                const double v = static_cast<double>(x[i]) +
                                 a * static_cast<double>(delta[i]) / dnorm + b * u[i] / unorm;
                points.at(k, i) = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
            ++k;
        }
    }
    const Tensor<T> logits = forward_logits(params, points);
    for (std::size_t r = 0; r < grid.losses.size(); ++r) {
        Tensor<T> row({logits.cols()});
        for (std::size_t j = 0; j < logits.cols(); ++j) row[j] = logits.at(r, j);
        grid.losses[r] = cross_entropy(row, y);
    }
    return grid;
}

}  // namespace iseat
