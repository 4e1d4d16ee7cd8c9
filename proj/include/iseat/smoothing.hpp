#pragma once

#include <string>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/errors.hpp"
#include "iseat/model.hpp"
#include "iseat/vulnerability.hpp"
#include "iseat/weight_perturb.hpp"

namespace iseat {

enum class PenaltyVariant { lsiw, lsi, trade_awp };
enum class Distance { sq_l2, kl };

inline const char* penalty_variant_name(PenaltyVariant v) {
    switch (v) {
        case PenaltyVariant::lsiw: return "lsiw";
        case PenaltyVariant::lsi: return "lsi";
        case PenaltyVariant::trade_awp: return "trade_awp";
    }
    return "?";
}

inline const char* distance_name(Distance d) {
    return d == Distance::sq_l2 ? "sq_l2" : "kl";
}

struct PenaltyConfig {
    PenaltyVariant variant = PenaltyVariant::lsiw;
    Distance distance = Distance::sq_l2;
    double lambda = 0.0;
    WeightScheme weight_scheme = WeightScheme::linear;

    void validate(const std::string& path) const {
        if (!(lambda >= 0)) throw ConfigError(path + ".lambda", "must be >= 0");
    }
};

// Distance between two logit vectors: squared ℓ2, or KL with the first
// (clean-side) distribution as the reference.
template <typename T>
double logit_distance(const Tensor<T>& clean_logits, const Tensor<T>& other_logits,
                      Distance dist) {
    if (!clean_logits.same_shape(other_logits))
        throw ShapeError("logit_distance: shape mismatch");
    Graph<T> g;
    Tensor<T> a({1, clean_logits.size()}, clean_logits.values());
    Tensor<T> b({1, other_logits.size()}, other_logits.values());
    const auto na = g.constant(a);
    const auto nb = g.constant(b);
    const auto node = dist == Distance::sq_l2 ? g.row_sumsq(g.sub(nb, na)) : g.softmax_kl(na, nb);
    return static_cast<double>(g.value(node)[0]);
}

// Which parameters each side of the penalty is evaluated under.
//   lsiw:      dist(f(x;θ), f(x+δ;θ+v))
//   lsi:       dist(f(x;θ), f(x+δ;θ))      (v ignored)
//   trade_awp: dist(f(x;θ+v), f(x+δ;θ+v))
template <typename T>
std::vector<double> batch_penalties(const ModelParams<T>& params, const WeightPerturbation<T>* v,
                                    const Tensor<T>& clean_inputs, const Tensor<T>& adv_inputs,
                                    const PenaltyConfig& cfg) {
    const bool use_v = v != nullptr && cfg.variant != PenaltyVariant::lsi;
    ModelParams<T> perturbed;
    if (use_v) perturbed = apply(params, *v);
    const ModelParams<T>& adv_model = use_v ? perturbed : params;
    const ModelParams<T>& clean_model =
        (use_v && cfg.variant == PenaltyVariant::trade_awp) ? perturbed : params;

    const Tensor<T> clean_logits = forward_logits(clean_model, clean_inputs);
    const Tensor<T> adv_logits = forward_logits(adv_model, adv_inputs);

    const std::size_t m = clean_inputs.rows(), c = clean_logits.cols();
    std::vector<double> out(m);
    for (std::size_t r = 0; r < m; ++r) {
        Tensor<T> a({c}), b({c});
        for (std::size_t j = 0; j < c; ++j) {
            a[j] = clean_logits.at(r, j);
            b[j] = adv_logits.at(r, j);
        }
        out[r] = logit_distance(a, b, cfg.distance);
    }
    return out;
}

// Per-instance penalty for one sample; y is part of the operation contract even
// though neither distance uses the label.
template <typename T>
double penalty(const ModelParams<T>& params, const WeightPerturbation<T>* v, const Tensor<T>& x,
               int /*y*/, const Tensor<T>& delta, const PenaltyConfig& cfg) {
    Tensor<T> xr({1, x.size()}, x.values());
    Tensor<T> dr({1, delta.size()}, delta.values());
    const Tensor<T> adv = perturbed_input(xr, dr);
    return batch_penalties(params, v, xr, adv, cfg)[0];
}

// Mean over the batch of L(x+δ) + η·‖f(x+δ)−f(x)‖₂²·1(top-10%-by-AV).
// The indicator selects the ⌈0.1·m⌉ samples with the highest input-space AV
// within the batch.
template <typename T>
double topn_regularized_loss(const ModelParams<T>& params, const Tensor<T>& clean_inputs,
                             const std::vector<int>& labels, const Tensor<T>& adv_inputs,
                             double eta) {
    if (!(eta >= 0)) throw ConfigError("eta", "must be >= 0");
    const std::vector<double> adv_losses = batch_losses(params, adv_inputs, labels);
    const std::vector<double> avs = batch_av(params, clean_inputs, adv_inputs, labels);
    const BatchVulnerability bv = rank_weights(avs, WeightScheme::top10);
    PenaltyConfig pcfg;
    pcfg.variant = PenaltyVariant::lsi;
    pcfg.distance = Distance::sq_l2;
    const std::vector<double> pens = batch_penalties<T>(params, nullptr, clean_inputs,
                                                        adv_inputs, pcfg);
    double total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        total += adv_losses[i] + eta * bv.weights[i] * pens[i];
    return total / static_cast<double>(labels.size());
}

}  // namespace iseat
