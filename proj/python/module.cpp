#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/checkpoint.hpp"
#include "iseat/config.hpp"
#include "iseat/data.hpp"
#include "iseat/gradcheck.hpp"
#include "iseat/model.hpp"
#include "iseat/runner.hpp"
#include "iseat/smoothing.hpp"
#include "iseat/trainer.hpp"
#include "iseat/vulnerability.hpp"
#include "iseat/weight_perturb.hpp"

namespace py = pybind11;

namespace {

using iseat::Tensor;
using Params = iseat::ModelParams<double>;
using Blocks = iseat::ParamBlocks<double>;

Tensor<double> tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> values(a.data(), a.data() + a.size());
    return Tensor<double>(shape, std::move(values));
}

py::array_t<double> array_from(const Tensor<double>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

// rows as [m×d] even when a single sample is passed
Tensor<double> as_batch(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tensor<double> t = tensor_from(a);
    if (t.rank() == 1) return Tensor<double>({1, t.size()}, t.values());
    return t;
}

Tensor<double> as_flat(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tensor<double> t = tensor_from(a);
    return Tensor<double>({t.size()}, t.values());
}

iseat::nd::Activation activation_of(const std::string& s) {
    if (s == "relu") return iseat::nd::Activation::relu;
    if (s == "tanh") return iseat::nd::Activation::tanh;
    if (s == "softplus") return iseat::nd::Activation::softplus;
    throw iseat::ConfigError("activation", "unknown activation '" + s + "'");
}

iseat::AttackConfig attack_config(double epsilon, int steps, double step_size, bool random_start,
                                  std::uint64_t seed) {
    iseat::AttackConfig cfg;
    cfg.epsilon = epsilon;
    cfg.steps = steps;
    cfg.step_size = step_size;
    cfg.random_start = random_start;
    cfg.seed = seed;
    return cfg;
}

std::vector<std::pair<py::array_t<double>, py::array_t<double>>> blocks_to_py(const Blocks& b) {
    std::vector<std::pair<py::array_t<double>, py::array_t<double>>> out;
    for (const auto& l : b.layers) out.emplace_back(array_from(l.weight), array_from(l.bias));
    return out;
}

Blocks blocks_from_py(const Params& like,
                      const std::vector<std::pair<py::array_t<double>, py::array_t<double>>>& v) {
    Blocks out = Blocks::zeros_like(like);
    if (v.size() != out.layers.size())
        throw iseat::ShapeError("perturbation layer count mismatch");
    for (std::size_t n = 0; n < v.size(); ++n) {
        Tensor<double> w = tensor_from(v[n].first);
        Tensor<double> b = as_flat(v[n].second);
        if (!w.same_shape(out.layers[n].weight) || !b.same_shape(out.layers[n].bias))
            throw iseat::ShapeError("perturbation block " + std::to_string(n) +
                                    " shape mismatch");
        out.layers[n] = {std::move(w), std::move(b)};
    }
    return out;
}

iseat::PenaltyConfig penalty_config(const std::string& variant, const std::string& distance,
                                    double lambda) {
    iseat::PenaltyConfig cfg;
    if (variant == "lsiw") cfg.variant = iseat::PenaltyVariant::lsiw;
    else if (variant == "lsi") cfg.variant = iseat::PenaltyVariant::lsi;
    else if (variant == "trade_awp") cfg.variant = iseat::PenaltyVariant::trade_awp;
    else throw iseat::ConfigError("variant", "unknown penalty variant '" + variant + "'");
    if (distance == "sq_l2") cfg.distance = iseat::Distance::sq_l2;
    else if (distance == "kl") cfg.distance = iseat::Distance::kl;
    else throw iseat::ConfigError("distance", "unknown distance '" + distance + "'");
    cfg.lambda = lambda;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "adversarial training laboratory core (dense networks, ℓ∞ attacks, "
              "weight perturbation, instance-adaptive smoothing)";

    py::register_exception<iseat::ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<iseat::NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<iseat::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<iseat::DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<iseat::IoError>(m, "IoError", PyExc_OSError);

    py::class_<Params>(m, "Model")
        .def_property_readonly("widths", [](const Params& p) { return p.spec.widths; })
        .def_property_readonly(
            "activation",
            [](const Params& p) { return std::string(activation_name(p.spec.activation)); })
        .def("forward",
             [](const Params& p, const py::array_t<double>& x) {
                 return array_from(forward_logits(p, as_batch(x)));
             },
             py::arg("x"))
        .def("predict",
             [](const Params& p, const py::array_t<double>& x) {
                 return predict(p, as_batch(x));
             },
             py::arg("x"))
        .def("layers",
             [](const Params& p) {
                 std::vector<std::pair<py::array_t<double>, py::array_t<double>>> out;
                 for (const auto& l : p.layers)
                     out.emplace_back(array_from(l.weight), array_from(l.bias));
                 return out;
             })
        .def("save",
             [](const Params& p, const std::string& path, int epoch) {
                 iseat::save_checkpoint(path, p, epoch);
             },
             py::arg("path"), py::arg("epoch") = 0);

    m.def(
        "init_model",
        [](const std::vector<std::size_t>& widths, const std::string& activation,
           std::uint64_t seed) {
            iseat::ModelSpec spec;
            spec.widths = widths;
            spec.activation = activation_of(activation);
            spec.init_seed = seed;
            return iseat::init_params<double>(spec);
        },
        py::arg("widths"), py::arg("activation") = "relu", py::arg("seed") = 0);

    m.def("load_model", [](const std::string& path) {
        return iseat::load_checkpoint(path).params<double>();
    });

    m.def(
        "cross_entropy",
        [](const py::array_t<double>& logits, int y) {
            return iseat::cross_entropy(as_flat(logits), y);
        },
        py::arg("logits"), py::arg("y"));

    m.def(
        "input_gradient",
        [](const Params& p, const py::array_t<double>& x, const std::vector<int>& labels) {
            return array_from(input_gradient(p, as_batch(x), labels));
        },
        py::arg("model"), py::arg("x"), py::arg("labels"));

    m.def(
        "fgsm",
        [](const Params& p, const py::array_t<double>& x, const std::vector<int>& labels,
           double epsilon) { return array_from(fgsm(p, as_batch(x), labels, epsilon)); },
        py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("epsilon"));

    m.def(
        "pgd",
        [](const Params& p, const py::array_t<double>& x, const std::vector<int>& labels,
           double epsilon, int steps, double step_size, bool random_start,
           std::uint64_t seed) {
            return array_from(pgd(p, as_batch(x), labels,
                                  attack_config(epsilon, steps, step_size, random_start, seed)));
        },
        py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("epsilon"),
        py::arg("steps") = 10, py::arg("step_size") = 2.0 / 255.0,
        py::arg("random_start") = true, py::arg("seed") = 0);

    m.def(
        "margin_search",
        [](const Params& p, const py::array_t<double>& x, const py::array_t<double>& delta,
           double mu_step, double mu_max) {
            const auto r = margin_search(p, as_flat(x), as_flat(delta), mu_step, mu_max);
            py::dict d;
            d["mu"] = r.mu;
            d["flipped"] = r.flipped;
            d["direction_norm"] = r.direction_norm;
            return d;
        },
        py::arg("model"), py::arg("x"), py::arg("delta"), py::arg("mu_step") = 0.25,
        py::arg("mu_max") = 50.0);

    m.def(
        "loss_landscape",
        [](const Params& p, const py::array_t<double>& x, int y, const py::array_t<double>& delta,
           const std::vector<double>& alphas, const std::vector<double>& betas, double epsilon,
           std::uint64_t seed) {
            const auto grid =
                loss_landscape(p, as_flat(x), y, as_flat(delta), alphas, betas, epsilon, seed);
            py::dict d;
            d["alphas"] = grid.alphas;
            d["betas"] = grid.betas;
            py::array_t<double> losses({alphas.size(), betas.size()});
            std::copy(grid.losses.begin(), grid.losses.end(), losses.mutable_data());
            d["losses"] = losses;
            d["alpha_budget"] = grid.alpha_budget;
            return d;
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("delta"), py::arg("alphas"),
        py::arg("betas"), py::arg("epsilon"), py::arg("seed") = 0);

    m.def(
        "awp_direction",
        [](const Params& p, const py::array_t<double>& adv_x, const std::vector<int>& labels,
           double gamma, int steps) {
            iseat::WeightPerturbConfig cfg;
            cfg.gamma = gamma;
            cfg.steps = steps;
            return blocks_to_py(awp_direction(p, as_batch(adv_x), labels, cfg));
        },
        py::arg("model"), py::arg("adv_x"), py::arg("labels"), py::arg("gamma"),
        py::arg("steps") = 1);

    m.def(
        "project_layerwise",
        [](const std::vector<std::pair<py::array_t<double>, py::array_t<double>>>& v,
           const Params& p, double gamma) {
            return blocks_to_py(project_layerwise(blocks_from_py(p, v), p, gamma));
        },
        py::arg("v"), py::arg("model"), py::arg("gamma"));

    m.def(
        "apply_perturbation",
        [](const Params& p,
           const std::vector<std::pair<py::array_t<double>, py::array_t<double>>>& v) {
            return apply(p, blocks_from_py(p, v));
        },
        py::arg("model"), py::arg("v"));

    m.def(
        "av",
        [](const Params& p, const py::array_t<double>& x, int y,
           const py::array_t<double>& delta) { return av(p, as_flat(x), y, as_flat(delta)); },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("delta"));

    m.def(
        "av_joint",
        [](const Params& p, const py::array_t<double>& x, int y, const py::array_t<double>& delta,
           const std::vector<std::pair<py::array_t<double>, py::array_t<double>>>& v) {
            return av_joint(p, as_flat(x), y, as_flat(delta), blocks_from_py(p, v));
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("delta"), py::arg("v"));

    m.def("av_stats", [](const std::vector<double>& avs) {
        const auto s = iseat::av_stats(avs);
        py::dict d;
        d["sd"] = s.sd;
        d["top10_mean"] = s.top10_mean;
        d["bot10_mean"] = s.bot10_mean;
        d["frac_ge_1"] = s.frac_ge_1;
        d["frac_le_0"] = s.frac_le_0;
        return d;
    });

    m.def(
        "rank_weights",
        [](const std::vector<double>& avs, const std::string& scheme) {
            iseat::WeightScheme ws = iseat::WeightScheme::linear;
            if (scheme == "linear") ws = iseat::WeightScheme::linear;
            else if (scheme == "unweighted") ws = iseat::WeightScheme::unweighted;
            else if (scheme == "top10") ws = iseat::WeightScheme::top10;
            else throw iseat::ConfigError("scheme", "unknown weight scheme '" + scheme + "'");
            const auto bv = rank_weights(avs, ws);
            py::dict d;
            d["ranks"] = bv.ranks;
            d["weights"] = bv.weights;
            return d;
        },
        py::arg("avs"), py::arg("scheme") = "linear");

    m.def(
        "penalty",
        [](const Params& p,
           const std::optional<std::vector<std::pair<py::array_t<double>, py::array_t<double>>>>&
               v,
           const py::array_t<double>& x, int y, const py::array_t<double>& delta,
           const std::string& variant, const std::string& distance) {
            const auto cfg = penalty_config(variant, distance, 1.0);
            if (v) {
                const Blocks blocks = blocks_from_py(p, *v);
                return penalty(p, &blocks, as_flat(x), y, as_flat(delta), cfg);
            }
            return penalty<double>(p, nullptr, as_flat(x), y, as_flat(delta), cfg);
        },
        py::arg("model"), py::arg("v"), py::arg("x"), py::arg("y"), py::arg("delta"),
        py::arg("variant") = "lsiw", py::arg("distance") = "sq_l2");

    m.def(
        "gen_synthetic",
        [](const std::string& kind, std::size_t n, double noise, std::uint64_t seed) {
            iseat::SyntheticKind k;
            if (kind == "blobs") k = iseat::SyntheticKind::blobs;
            else if (kind == "moons") k = iseat::SyntheticKind::moons;
            else if (kind == "circles") k = iseat::SyntheticKind::circles;
            else throw iseat::ConfigError("kind", "unknown synthetic kind '" + kind + "'");
            const auto ds = gen_synthetic(k, n, noise, seed);
            return std::pair(array_from(ds.inputs), ds.labels);
        },
        py::arg("kind"), py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);

    m.def("load_idx", [](const std::string& images, const std::string& labels) {
        const auto ds = iseat::load_idx(images, labels);
        return std::pair(array_from(ds.inputs), ds.labels);
    });

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::string& out_dir,
           std::optional<std::uint64_t> seed, std::optional<std::string> precision) {
            const auto cfg = iseat::parse_experiment_config(config_json, seed, precision);
            const auto s = iseat::run_experiment(cfg, out_dir);
            py::dict d;
            d["label"] = s.label;
            d["out_dir"] = s.out_dir;
            d["best_epoch"] = s.best_epoch;
            d["best_robust_acc"] = s.best_robust_acc;
            d["final_robust_acc"] = s.final_row.eval_robust_acc;
            d["final_clean_acc"] = s.final_row.eval_clean_acc;
            d["final_av_sd"] = s.final_row.av.sd;
            return d;
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("seed") = std::nullopt,
        py::arg("precision") = std::nullopt);

    m.attr("__version__") = "0.1.0";
}
