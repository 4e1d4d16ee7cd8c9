#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/model.hpp"
#include "iseat/weight_perturb.hpp"

namespace iseat {

enum class WeightScheme { linear, unweighted, top10 };

inline const char* weight_scheme_name(WeightScheme s) {
    switch (s) {
        case WeightScheme::linear: return "linear";
        case WeightScheme::unweighted: return "unweighted";
        case WeightScheme::top10: return "top10";
    }
    return "?";
}

// Loss increment caused by the attack: L(x+δ) − L(x). May be negative.
template <typename T>
double av(const ModelParams<T>& params, const Tensor<T>& x, int y, const Tensor<T>& delta) {
    const Tensor<T> clean = forward_logits_single(params, x);
    Tensor<T> xr({1, x.size()}, x.values());
    Tensor<T> dr({1, delta.size()}, delta.values());
    const Tensor<T> advp = perturbed_input(xr, dr);
    Tensor<T> adv_flat({advp.size()}, advp.values());
    const Tensor<T> advl = forward_logits_single(params, adv_flat);
    return cross_entropy(advl, y) - cross_entropy(clean, y);
}

// Joint form: L(x+δ; θ+v) − L(x; θ).
template <typename T>
double av_joint(const ModelParams<T>& params, const Tensor<T>& x, int y, const Tensor<T>& delta,
                const WeightPerturbation<T>& v) {
    const ModelParams<T> perturbed = apply(params, v);
    const Tensor<T> clean = forward_logits_single(params, x);
    Tensor<T> xr({1, x.size()}, x.values());
    Tensor<T> dr({1, delta.size()}, delta.values());
    const Tensor<T> advp = perturbed_input(xr, dr);
    Tensor<T> adv_flat({advp.size()}, advp.values());
    const Tensor<T> advl = forward_logits_single(perturbed, adv_flat);
    return cross_entropy(advl, y) - cross_entropy(clean, y);
}

// Batched: per-row L(adv; θ+v) − L(clean; θ). Pass v = nullptr for the
// input-only form.
template <typename T>
std::vector<double> batch_av(const ModelParams<T>& params, const Tensor<T>& clean_inputs,
                             const Tensor<T>& adv_inputs, const std::vector<int>& labels,
                             const WeightPerturbation<T>* v = nullptr) {
    const std::vector<double> clean = batch_losses(params, clean_inputs, labels);
    std::vector<double> adv;
    if (v) {
        const ModelParams<T> perturbed = apply(params, *v);
        adv = batch_losses(perturbed, adv_inputs, labels);
    } else {
        adv = batch_losses(params, adv_inputs, labels);
    }
    std::vector<double> out(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) out[i] = adv[i] - clean[i];
    return out;
}

struct AVStats {
    double sd = 0.0;
    double top10_mean = 0.0;
    double bot10_mean = 0.0;
    double frac_ge_1 = 0.0;
    double frac_le_0 = 0.0;
};

// Population statistics of AV over a dataset. SD uses the expectation form
// (divisor = count); the top/bottom means cover the ⌈0.1·n⌉ extreme values.
inline AVStats av_stats(const std::vector<double>& avs) {
    if (avs.empty()) throw ShapeError("av_stats: empty list");
    const std::size_t n = avs.size();
    double mean = 0;
    for (const double a : avs) mean += a;
    mean /= static_cast<double>(n);
    const auto [mn, mx] = std::minmax_element(avs.begin(), avs.end());
    double var = 0;
    if (*mn != *mx) {  // constant lists have exactly zero spread
        for (const double a : avs) var += (a - mean) * (a - mean);
        var /= static_cast<double>(n);
    }

    std::vector<double> sorted = avs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = (n + 9) / 10;  // ⌈0.1·n⌉
    double bot = 0, top = 0;
    for (std::size_t i = 0; i < k; ++i) {
        bot += sorted[i];
        top += sorted[n - 1 - i];
    }
    std::size_t ge1 = 0, le0 = 0;
    for (const double a : avs) {
        if (a >= 1.0) ++ge1;
        if (a <= 0.0) ++le0;
    }
    AVStats s;
    s.sd = std::sqrt(var);
    s.top10_mean = top / static_cast<double>(k);
    s.bot10_mean = bot / static_cast<double>(k);
    s.frac_ge_1 = static_cast<double>(ge1) / static_cast<double>(n);
    s.frac_le_0 = static_cast<double>(le0) / static_cast<double>(n);
    return s;
}

struct BatchVulnerability {
    std::vector<double> av;      // as supplied
    std::vector<int> ranks;      // ranks[i] = rank of instance i; 0 = largest AV
    std::vector<double> weights;  // per the selected scheme
};

// Rank-based instance weights. Descending AV with ties broken by the lower
// original index; linear scheme gives w_i = 1 − r_i/m, so the most vulnerable
// instance gets exactly 1 and the least gets 1/m.
inline BatchVulnerability rank_weights(const std::vector<double>& avs,
                                       WeightScheme scheme = WeightScheme::linear) {
    if (avs.empty()) throw ShapeError("rank_weights: empty batch");
    const std::size_t m = avs.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return avs[a] > avs[b]; });

    BatchVulnerability out;
    out.av = avs;
    out.ranks.resize(m);
    out.weights.resize(m);
    const std::size_t topk = (m + 9) / 10;
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = order[r];
        out.ranks[i] = static_cast<int>(r);
        switch (scheme) {
            case WeightScheme::linear:
                out.weights[i] = 1.0 - static_cast<double>(r) / static_cast<double>(m);
                break;
            case WeightScheme::unweighted: out.weights[i] = 1.0; break;
            case WeightScheme::top10: out.weights[i] = r < topk ? 1.0 : 0.0; break;
        }
    }
    return out;
}

inline BatchVulnerability linear_weights(const std::vector<double>& avs) {
    return rank_weights(avs, WeightScheme::linear);
}

}  // namespace iseat
