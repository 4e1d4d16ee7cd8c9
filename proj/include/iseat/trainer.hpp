#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/csv.hpp"
#include "iseat/data.hpp"
#include "iseat/errors.hpp"
#include "iseat/model.hpp"
#include "iseat/rng.hpp"
#include "iseat/smoothing.hpp"
#include "iseat/vulnerability.hpp"
#include "iseat/weight_perturb.hpp"

namespace iseat {

enum class Method { at, at_awp, iseat, lsi, trade_awp, topn_finetune };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::at: return "at";
        case Method::at_awp: return "at_awp";
        case Method::iseat: return "iseat";
        case Method::lsi: return "lsi";
        case Method::trade_awp: return "trade_awp";
        case Method::topn_finetune: return "topn_finetune";
    }
    return "?";
}

inline bool method_uses_awp(Method m) {
    return m == Method::at_awp || m == Method::iseat || m == Method::trade_awp;
}

inline bool method_uses_penalty(Method m) {
    return m == Method::iseat || m == Method::lsi || m == Method::trade_awp ||
           m == Method::topn_finetune;
}

struct LrSchedule {
    double initial = 0.1;
    double decay_factor = 0.1;
    std::vector<double> decay_fractions = {0.5, 0.75};

    void validate(const std::string& path) const {
        if (!(initial > 0)) throw ConfigError(path + ".initial", "must be > 0");
        if (!(decay_factor > 0)) throw ConfigError(path + ".decay_factor", "must be > 0");
        double prev = 0.0;
        for (const double f : decay_fractions) {
            if (!(f > 0.0 && f < 1.0))
                throw ConfigError(path + ".decay_fractions", "entries must be in (0,1)");
            if (!(f > prev))
                throw ConfigError(path + ".decay_fractions", "must be strictly increasing");
            prev = f;
        }
    }

    // piecewise decay: one factor per fraction f with epoch > f·total (1-based)
    double at_epoch(int epoch, int total_epochs) const {
        double lr = initial;
        for (const double f : decay_fractions)
            if (static_cast<double>(epoch) > f * static_cast<double>(total_epochs))
                lr *= decay_factor;
        return lr;
    }

    // first epoch at which at least one decay has been applied; total+1 if never
    int first_decay_epoch(int total_epochs) const {
        if (decay_fractions.empty()) return total_epochs + 1;
        for (int e = 1; e <= total_epochs; ++e)
            if (static_cast<double>(e) > decay_fractions.front() *
                                             static_cast<double>(total_epochs))
                return e;
        return total_epochs + 1;
    }
};

struct SwaConfig {
    double start_fraction = 0.5;
    int period = 1;

    void validate(const std::string& path) const {
        if (!(start_fraction >= 0.0 && start_fraction <= 1.0))
            throw ConfigError(path + ".start_fraction", "must be in [0,1]");
        if (period < 1) throw ConfigError(path + ".period", "must be >= 1");
    }

    int start_epoch(int total_epochs) const {
        const int e = static_cast<int>(
            std::ceil(start_fraction * static_cast<double>(total_epochs)));
        return std::max(1, e);
    }
};

struct RunConfig {
    Method method = Method::at;
    AttackConfig attack;            // training adversary
    AttackConfig eval_attack;       // per-epoch robustness tracking + AV measurement
    WeightPerturbConfig wp;
    PenaltyConfig penalty;
    int epochs = 10;
    std::size_t batch_size = 128;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool lambda_warmup = false;
    int eps_ramp_epochs = 0;
    std::uint64_t seed = 0;
    std::optional<SwaConfig> swa;

    void validate(const std::string& path = "train") const {
        if (epochs < 1) throw ConfigError(path + ".epochs", "must be >= 1");
        if (batch_size < 1) throw ConfigError(path + ".batch_size", "must be >= 1");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError(path + ".momentum", "must be in [0,1)");
        if (!(weight_decay >= 0)) throw ConfigError(path + ".weight_decay", "must be >= 0");
        if (eps_ramp_epochs < 0) throw ConfigError(path + ".eps_ramp_epochs", "must be >= 0");
        attack.validate(path + ".attack");
        eval_attack.validate(path + ".eval_attack");
        wp.validate(path + ".wp");
        penalty.validate(path + ".penalty");
        lr.validate(path + ".lr");
        if (swa) swa->validate(path + ".swa");
    }

    double effective_lambda(int epoch, int total_epochs) const {
        if (lambda_warmup && epoch < lr.first_decay_epoch(total_epochs)) return 0.0;
        return penalty.lambda;
    }

    // linear ramp from 0 over the first eps_ramp_epochs epochs, constant after
    double effective_epsilon(int epoch) const {
        if (eps_ramp_epochs <= 0) return attack.epsilon;
        const double f = static_cast<double>(epoch - 1) / static_cast<double>(eps_ramp_epochs);
        return attack.epsilon * std::min(1.0, f);
    }
};

namespace seed_tag {
constexpr std::uint64_t attack = 0xa77ac4ULL;
constexpr std::uint64_t av_pass = 0xa0157aULL;
constexpr std::uint64_t eval = 0xe7a1ULL;
}  // namespace seed_tag

// Gradient (and value) of the overall objective
//   mean_i [ CE(f(x_i+δ_i; θ′), y_i) + λ·w_i·o_i ]
// with θ′ = θ + v and (v, w, δ) held constant. The graph declares the
// parameters of every forward pass as separate inputs and the per-layer
// gradients are summed across passes, which is exactly the chain-rule split
// with ∂θ′/∂θ = identity.
template <typename T>
struct ObjectiveResult {
    ParamBlocks<T> grad;
    double loss = 0;
};

template <typename T>
ObjectiveResult<T> objective_gradient(const ModelParams<T>& theta,
                                      const WeightPerturbation<T>* v, const Tensor<T>& clean_x,
                                      const Tensor<T>& adv_x, const std::vector<int>& labels,
                                      double lambda_eff, const std::vector<double>& weights,
                                      const PenaltyConfig& pcfg, bool penalty_active) {
    const std::size_t m = labels.size();
    if (m == 0) throw ShapeError("objective_gradient: empty batch");
    const T inv_m = T(1) / static_cast<T>(m);

    ModelParams<T> theta_adv = theta;
    if (v) add_in_place(theta_adv, *v);

    Graph<T> g;
    std::vector<ForwardHandles<T>> passes;

    // adversarial CE path, under θ′
    passes.push_back(build_forward(g, theta_adv, adv_x, false, true));
    const auto ce = g.softmax_cross_entropy(passes.back().logits, labels);
    auto total = g.weighted_sum(ce, std::vector<T>(m, inv_m));

    if (penalty_active) {
        if (weights.size() != m) throw ShapeError("objective_gradient: weight count mismatch");
        // penalty sides by variant; each side adds its own forward pass
        typename Graph<T>::NodeId adv_side, clean_side;
        if (pcfg.variant == PenaltyVariant::lsi) {
            passes.push_back(build_forward(g, theta, adv_x, false, true));
            adv_side = passes.back().logits;
        } else {
            adv_side = passes.front().logits;  // reuse θ′ pass
        }
        const ModelParams<T>& clean_model =
            pcfg.variant == PenaltyVariant::trade_awp ? theta_adv : theta;
        passes.push_back(build_forward(g, clean_model, clean_x, false, true));
        clean_side = passes.back().logits;

        const auto pen = pcfg.distance == Distance::sq_l2
                             ? g.row_sumsq(g.sub(adv_side, clean_side))
                             : g.softmax_kl(clean_side, adv_side);
        std::vector<T> wm(m);
        for (std::size_t i = 0; i < m; ++i) wm[i] = static_cast<T>(weights[i]) * inv_m;
        total = g.add(total, g.scale(g.weighted_sum(pen, std::move(wm)),
                                     static_cast<T>(lambda_eff)));
    }

    const auto grads = g.backward(total);

    ObjectiveResult<T> out;
    out.loss = static_cast<double>(g.value(total)[0]);
    out.grad = ParamBlocks<T>::zeros_like(theta);
    const std::size_t layers = theta.layer_count();
    for (std::size_t p = 0; p < passes.size(); ++p) {
        for (std::size_t n = 0; n < layers; ++n) {
            const auto& gw = grads[p * 2 * layers + 2 * n];
            const auto& gb = grads[p * 2 * layers + 2 * n + 1];
            for (std::size_t i = 0; i < gw.size(); ++i) out.grad.layers[n].weight[i] += gw[i];
            for (std::size_t i = 0; i < gb.size(); ++i) out.grad.layers[n].bias[i] += gb[i];
        }
    }
    return out;
}

template <typename T>
struct TrainState {
    ModelParams<T> params;
    ParamBlocks<T> momentum;

    explicit TrainState(ModelParams<T> p)
        : params(std::move(p)), momentum(ParamBlocks<T>::zeros_like(params)) {}
};

// SGD with momentum and weight decay on the unperturbed parameters. The AWP
// update θ ← (θ+v) − l·grad − v collapses to θ − l·grad on the stored θ, so the
// optimizer steps θ directly and v never touches the momentum buffer.
template <typename T>
void sgd_update(TrainState<T>& st, const ParamBlocks<T>& grad, double lr, double momentum,
                double weight_decay) {
    const T l = static_cast<T>(lr);
    const T mom = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    for (std::size_t n = 0; n < st.params.layers.size(); ++n) {
        auto step_tensor = [&](Tensor<T>& p, Tensor<T>& buf, const Tensor<T>& gt) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                const T gv = gt[i] + wd * p[i];
                buf[i] = mom * buf[i] + gv;
                p[i] -= l * buf[i];
            }
        };
        step_tensor(st.params.layers[n].weight, st.momentum.layers[n].weight,
                    grad.layers[n].weight);
        step_tensor(st.params.layers[n].bias, st.momentum.layers[n].bias,
                    grad.layers[n].bias);
    }
}

struct StepMetrics {
    double clean_loss_sum = 0;
    double adv_loss_sum = 0;
    std::size_t count = 0;
};

// One optimization step on one batch, dispatching on cfg.method:
//   1. per-instance δ by PGD at the effective ε
//   2. v by the one-step weight perturbation (AWP methods)
//   3. instance weights from the ranked joint vulnerability (penalty methods)
//   4. objective gradient with (v, w, δ) constant
//   5. SGD step on θ
template <typename T>
void train_step(TrainState<T>& st, const Tensor<T>& x, const std::vector<int>& labels,
                const RunConfig& cfg, double eff_eps, double eff_lambda, double lr,
                std::uint64_t attack_seed, StepMetrics& metrics) {
    AttackConfig acfg = cfg.attack;
    acfg.epsilon = eff_eps;
    acfg.seed = attack_seed;
    const Tensor<T> delta = pgd(st.params, x, labels, acfg);
    const Tensor<T> adv = perturbed_input(x, delta);

    const bool use_awp = method_uses_awp(cfg.method) && cfg.wp.gamma > 0;
    WeightPerturbation<T> v;
    if (use_awp) v = awp_direction(st.params, adv, labels, cfg.wp);
    const WeightPerturbation<T>* vp = use_awp ? &v : nullptr;

    const std::vector<double> clean_rows = batch_losses(st.params, x, labels);
    const std::vector<double> adv_rows = batch_losses(st.params, adv, labels);

    const bool penalty_active = method_uses_penalty(cfg.method) && eff_lambda > 0;
    std::vector<double> weights;
    if (penalty_active) {
        std::vector<double> joint_adv = adv_rows;
        if (vp) {
            const ModelParams<T> perturbed = apply(st.params, *vp);
            joint_adv = batch_losses(perturbed, adv, labels);
        }
        std::vector<double> avs(labels.size());
        for (std::size_t i = 0; i < avs.size(); ++i) avs[i] = joint_adv[i] - clean_rows[i];
        weights = rank_weights(avs, cfg.penalty.weight_scheme).weights;
    }

    const auto obj = objective_gradient(st.params, vp, x, adv, labels, eff_lambda, weights,
                                        cfg.penalty, penalty_active);
    if (!std::isfinite(obj.loss)) throw NumericError("non-finite training loss");
    sgd_update(st, obj.grad, lr, cfg.momentum, cfg.weight_decay);

    for (const double l : clean_rows) metrics.clean_loss_sum += l;
    for (const double l : adv_rows) metrics.adv_loss_sum += l;
    metrics.count += labels.size();
}

template <typename T>
struct EvalResult {
    double clean_acc = 0;
    double robust_acc = 0;
};

template <typename T>
EvalResult<T> evaluate(const ModelParams<T>& params, const Dataset& ds,
                       const AttackConfig& eval_attack, std::size_t chunk,
                       std::uint64_t seed_base) {
    EvalResult<T> res;
    std::size_t clean_ok = 0, robust_ok = 0;
    const auto chunks = [&] {
        std::vector<std::vector<std::size_t>> out;
        std::vector<std::size_t> cur;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            cur.push_back(i);
            if (cur.size() == chunk) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        return out;
    }();
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const Dataset part = take(ds, chunks[c]);
        const Tensor<T> x = cast_tensor<T>(part.inputs);
        const auto preds = predict(params, x);
        AttackConfig acfg = eval_attack;
        acfg.seed = mix_seed(seed_base, c, 0x0e7a1ULL);
        const Tensor<T> delta = pgd(params, x, part.labels, acfg);
        const auto adv_preds = predict(params, perturbed_input(x, delta));
        for (std::size_t i = 0; i < part.labels.size(); ++i) {
            clean_ok += preds[i] == part.labels[i];
            robust_ok += adv_preds[i] == part.labels[i];
        }
    }
    res.clean_acc = static_cast<double>(clean_ok) / static_cast<double>(ds.size());
    res.robust_acc = static_cast<double>(robust_ok) / static_cast<double>(ds.size());
    return res;
}

// Fresh-attack AV over a dataset (input-only form, Eq. 3 style) in chunks.
template <typename T>
std::vector<double> measure_avs(const ModelParams<T>& params, const Dataset& ds,
                                const AttackConfig& eval_attack, std::size_t chunk,
                                std::uint64_t seed_base) {
    std::vector<double> avs;
    avs.reserve(ds.size());
    for (std::size_t start = 0, c = 0; start < ds.size(); start += chunk, ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i)
            idx.push_back(i);
        const Dataset part = take(ds, idx);
        const Tensor<T> x = cast_tensor<T>(part.inputs);
        AttackConfig acfg = eval_attack;
        acfg.seed = mix_seed(seed_base, c, 0x0a5a55ULL);
        const Tensor<T> delta = pgd(params, x, part.labels, acfg);
        const Tensor<T> adv = perturbed_input(x, delta);
        const auto part_avs = batch_av(params, x, adv, part.labels);
        avs.insert(avs.end(), part_avs.begin(), part_avs.end());
    }
    return avs;
}

template <typename T>
struct RunResult {
    std::vector<MetricsRecord> metrics;
    ModelParams<T> final_params;
    ModelParams<T> best_params;
    int best_epoch = 0;
    double best_robust_acc = -1.0;
    std::optional<ModelParams<T>> swa_params;
};

// Full training run: epoch loop with LR decay, λ warm-up, ε ramp, per-epoch
// fresh-attack AV statistics over the train split, per-epoch evaluation on the
// held-out split, best-checkpoint tracking (ties keep the earlier epoch) and
// optional running-average weights.
template <typename T>
RunResult<T> run_training(ModelParams<T> initial, const Dataset& train, const Dataset& test,
                          const RunConfig& cfg) {
    cfg.validate();
    train.validate();
    test.validate();
    initial.check_consistent();

    TrainState<T> st(std::move(initial));
    RunResult<T> res;
    res.final_params = st.params;
    res.best_params = st.params;

    const std::uint64_t run_seed = mix_seed(cfg.seed, cfg.attack.seed, 0x15ea7ULL);
    int swa_count = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = cfg.lr.at_epoch(epoch, cfg.epochs);
        const double eff_lambda = cfg.effective_lambda(epoch, cfg.epochs);
        const double eff_eps = cfg.effective_epsilon(epoch);

        StepMetrics sm;
        const auto batches = batch_indices(train.size(), cfg.batch_size, run_seed,
                                           static_cast<std::uint64_t>(epoch));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Dataset part = take(train, batches[b]);
            const Tensor<T> x = cast_tensor<T>(part.inputs);
            const std::uint64_t aseed =
                mix_seed(run_seed, static_cast<std::uint64_t>(epoch), b, seed_tag::attack);
            try {
                train_step(st, x, part.labels, cfg, eff_eps, eff_lambda, lr, aseed, sm);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b) + ": " + e.what());
            }
        }

        const std::uint64_t av_seed =
            mix_seed(run_seed, static_cast<std::uint64_t>(epoch), seed_tag::av_pass);
        const auto avs = measure_avs(st.params, train, cfg.eval_attack, cfg.batch_size, av_seed);

        const std::uint64_t eval_seed =
            mix_seed(run_seed, static_cast<std::uint64_t>(epoch), seed_tag::eval);
        const auto ev = evaluate<T>(st.params, test, cfg.eval_attack, cfg.batch_size, eval_seed);

        MetricsRecord row;
        row.epoch = epoch;
        row.train_clean_loss = sm.clean_loss_sum / static_cast<double>(sm.count);
        row.train_adv_loss = sm.adv_loss_sum / static_cast<double>(sm.count);
        row.eval_clean_acc = ev.clean_acc;
        row.eval_robust_acc = ev.robust_acc;
        row.av = av_stats(avs);
        row.lr = lr;
        row.lambda = eff_lambda;
        row.eps = eff_eps;
        res.metrics.push_back(row);

        if (ev.robust_acc > res.best_robust_acc) {
            res.best_robust_acc = ev.robust_acc;
            res.best_epoch = epoch;
            res.best_params = st.params;
        }

        if (cfg.swa && epoch >= cfg.swa->start_epoch(cfg.epochs) &&
            (epoch - cfg.swa->start_epoch(cfg.epochs)) % cfg.swa->period == 0) {
            ++swa_count;
            if (!res.swa_params) {
                res.swa_params = st.params;
            } else {
                const T k = static_cast<T>(swa_count);
                for (std::size_t n = 0; n < st.params.layers.size(); ++n) {
                    auto avg_tensor = [&](Tensor<T>& avg, const Tensor<T>& cur) {
                        for (std::size_t i = 0; i < avg.size(); ++i)
                            avg[i] += (cur[i] - avg[i]) / k;
                    };
                    avg_tensor(res.swa_params->layers[n].weight, st.params.layers[n].weight);
                    avg_tensor(res.swa_params->layers[n].bias, st.params.layers[n].bias);
                }
            }
        }
    }

    res.final_params = st.params;
    return res;
}

}  // namespace iseat
