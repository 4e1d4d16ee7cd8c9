#include "iseat/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace iseat {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
}

const json* get(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

template <typename T>
T as(const json& v, const std::string& path) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

template <typename T>
T field_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
    const json* v = get(obj, key);
    return v ? as<T>(*v, path + "." + key) : fallback;
}

template <typename T>
T required(const json& obj, const std::string& key, const std::string& path) {
    const json* v = get(obj, key);
    if (!v) throw ConfigError(path + "." + key, "is required");
    return as<T>(*v, path + "." + key);
}

nd::Activation parse_activation(const std::string& s, const std::string& path) {
    if (s == "relu") return nd::Activation::relu;
    if (s == "tanh") return nd::Activation::tanh;
    if (s == "softplus") return nd::Activation::softplus;
    throw ConfigError(path, "unknown activation '" + s + "'");
}

Method parse_method(const std::string& s, const std::string& path) {
    for (const Method m : {Method::at, Method::at_awp, Method::iseat, Method::lsi,
                           Method::trade_awp, Method::topn_finetune})
        if (s == method_name(m)) return m;
    throw ConfigError(path, "unknown method '" + s + "'");
}

PenaltyVariant parse_variant(const std::string& s, const std::string& path) {
    for (const PenaltyVariant v :
         {PenaltyVariant::lsiw, PenaltyVariant::lsi, PenaltyVariant::trade_awp})
        if (s == penalty_variant_name(v)) return v;
    throw ConfigError(path, "unknown penalty variant '" + s + "'");
}

Distance parse_distance(const std::string& s, const std::string& path) {
    if (s == "sq_l2") return Distance::sq_l2;
    if (s == "kl") return Distance::kl;
    throw ConfigError(path, "unknown distance '" + s + "'");
}

WeightScheme parse_scheme(const std::string& s, const std::string& path) {
    for (const WeightScheme w : {WeightScheme::linear, WeightScheme::unweighted,
                                 WeightScheme::top10})
        if (s == weight_scheme_name(w)) return w;
    throw ConfigError(path, "unknown weight scheme '" + s + "'");
}

SyntheticKind parse_kind(const std::string& s, const std::string& path) {
    for (const SyntheticKind k :
         {SyntheticKind::blobs, SyntheticKind::moons, SyntheticKind::circles})
        if (s == synthetic_kind_name(k)) return k;
    throw ConfigError(path, "unknown synthetic kind '" + s + "'");
}

AttackConfig parse_attack(const json& obj, const std::string& path, const AttackConfig& dflt) {
    reject_unknown(obj, path, {"epsilon", "steps", "step_size", "random_start", "seed"});
    AttackConfig a = dflt;
    a.epsilon = field_or(obj, "epsilon", path, a.epsilon);
    a.steps = field_or(obj, "steps", path, a.steps);
    a.step_size = field_or(obj, "step_size", path, a.step_size);
    a.random_start = field_or(obj, "random_start", path, a.random_start);
    a.seed = field_or(obj, "seed", path, a.seed);
    return a;
}

PenaltyVariant default_variant(Method m) {
    switch (m) {
        case Method::iseat: return PenaltyVariant::lsiw;
        case Method::trade_awp: return PenaltyVariant::trade_awp;
        default: return PenaltyVariant::lsi;
    }
}

std::vector<double> default_alphas() {
    std::vector<double> v;
    for (int i = -4; i <= 16; ++i) v.push_back(0.25 * i);
    return v;
}

std::vector<double> default_betas() {
    std::vector<double> v;
    for (int i = -4; i <= 4; ++i) v.push_back(0.25 * i);
    return v;
}

ExperimentConfig parse(const json& root, std::optional<std::uint64_t> seed_override,
                       std::optional<std::string> precision_override) {
    if (!root.is_object()) throw ConfigError("", "config root must be a JSON object");
    reject_unknown(root, "", {"label", "precision", "seed", "seeds", "output_dir", "dataset",
                              "model", "train", "analysis"});

    ExperimentConfig cfg;
    cfg.label = field_or<std::string>(root, "label", "", "run");
    cfg.precision = field_or<std::string>(root, "precision", "", "f64");
    cfg.seed = required<std::uint64_t>(root, "seed", "");
    if (const json* s = get(root, "seeds"))
        cfg.seeds = as<std::vector<std::uint64_t>>(*s, "seeds");
    cfg.output_dir = field_or<std::string>(root, "output_dir", "", "");

    if (seed_override) cfg.seed = *seed_override;
    if (precision_override) cfg.precision = *precision_override;
    if (cfg.precision != "f32" && cfg.precision != "f64")
        throw ConfigError("precision", "must be 'f32' or 'f64'");

    // dataset
    {
        const json* d = get(root, "dataset");
        if (!d) throw ConfigError("dataset", "is required");
        const std::string src = required<std::string>(*d, "source", "dataset");
        if (src == "synthetic") {
            reject_unknown(*d, "dataset",
                           {"source", "kind", "n", "noise", "seed", "test_fraction"});
            cfg.dataset.source = DatasetConfig::Source::synthetic;
            cfg.dataset.kind = parse_kind(required<std::string>(*d, "kind", "dataset"),
                                          "dataset.kind");
            cfg.dataset.n = required<std::size_t>(*d, "n", "dataset");
            cfg.dataset.noise = field_or(*d, "noise", "dataset", 0.1);
            cfg.dataset.seed =
                field_or(*d, "seed", "dataset", mix_seed(cfg.seed, 0xda7aULL));
        } else if (src == "idx") {
            reject_unknown(*d, "dataset", {"source", "images", "labels", "test_fraction"});
            cfg.dataset.source = DatasetConfig::Source::idx;
            cfg.dataset.images = required<std::string>(*d, "images", "dataset");
            cfg.dataset.labels = required<std::string>(*d, "labels", "dataset");
        } else {
            throw ConfigError("dataset.source", "must be 'synthetic' or 'idx'");
        }
        cfg.dataset.test_fraction = field_or(*d, "test_fraction", "dataset", 0.25);
        cfg.dataset.split_seed = mix_seed(cfg.seed, 0x5b117ULL);
    }

    // model
    {
        const json* m = get(root, "model");
        if (!m) throw ConfigError("model", "is required");
        reject_unknown(*m, "model", {"widths", "activation", "init_seed"});
        cfg.model.widths = required<std::vector<std::size_t>>(*m, "widths", "model");
        cfg.model.activation = parse_activation(
            field_or<std::string>(*m, "activation", "model", "relu"), "model.activation");
        cfg.model.init_seed =
            field_or(*m, "init_seed", "model", mix_seed(cfg.seed, 0x1217ULL));
    }

    // train
    {
        const json* t = get(root, "train");
        if (!t) throw ConfigError("train", "is required");
        reject_unknown(*t, "train",
                       {"method", "epochs", "batch_size", "lr", "momentum", "weight_decay",
                        "lambda_warmup", "eps_ramp_epochs", "attack", "eval_attack", "wp",
                        "penalty", "swa"});
        RunConfig& rc = cfg.train;
        rc.method = parse_method(required<std::string>(*t, "method", "train"), "train.method");
        rc.epochs = required<int>(*t, "epochs", "train");
        rc.batch_size = field_or<std::size_t>(*t, "batch_size", "train", 128);
        rc.momentum = field_or(*t, "momentum", "train", 0.9);
        rc.weight_decay = field_or(*t, "weight_decay", "train", 5e-4);
        rc.lambda_warmup = field_or(*t, "lambda_warmup", "train", false);
        rc.eps_ramp_epochs = field_or(*t, "eps_ramp_epochs", "train", 0);
        rc.seed = cfg.seed;

        if (const json* lr = get(*t, "lr")) {
            reject_unknown(*lr, "train.lr", {"initial", "decay_factor", "decay_fractions"});
            rc.lr.initial = field_or(*lr, "initial", "train.lr", rc.lr.initial);
            rc.lr.decay_factor = field_or(*lr, "decay_factor", "train.lr", rc.lr.decay_factor);
            if (const json* f = get(*lr, "decay_fractions"))
                rc.lr.decay_fractions =
                    as<std::vector<double>>(*f, "train.lr.decay_fractions");
        }

        if (const json* a = get(*t, "attack"))
            rc.attack = parse_attack(*a, "train.attack", AttackConfig{});
        AttackConfig eval_default = rc.attack;
        eval_default.steps = 10;
        eval_default.random_start = true;
        if (const json* a = get(*t, "eval_attack"))
            rc.eval_attack = parse_attack(*a, "train.eval_attack", eval_default);
        else
            rc.eval_attack = eval_default;

        if (const json* w = get(*t, "wp")) {
            reject_unknown(*w, "train.wp", {"gamma", "steps"});
            rc.wp.gamma = field_or(*w, "gamma", "train.wp", 0.0);
            rc.wp.steps = field_or(*w, "steps", "train.wp", 1);
        }

        rc.penalty.variant = default_variant(rc.method);
        rc.penalty.weight_scheme = rc.method == Method::topn_finetune ? WeightScheme::top10
                                                                      : WeightScheme::linear;
        if (const json* p = get(*t, "penalty")) {
            reject_unknown(*p, "train.penalty",
                           {"variant", "distance", "lambda", "weight_scheme"});
            if (const json* v = get(*p, "variant"))
                rc.penalty.variant =
                    parse_variant(as<std::string>(*v, "train.penalty.variant"),
                                  "train.penalty.variant");
            if (const json* d = get(*p, "distance"))
                rc.penalty.distance =
                    parse_distance(as<std::string>(*d, "train.penalty.distance"),
                                   "train.penalty.distance");
            rc.penalty.lambda = field_or(*p, "lambda", "train.penalty", 0.0);
            if (const json* w = get(*p, "weight_scheme"))
                rc.penalty.weight_scheme =
                    parse_scheme(as<std::string>(*w, "train.penalty.weight_scheme"),
                                 "train.penalty.weight_scheme");
        }

        if (const json* s = get(*t, "swa")) {
            reject_unknown(*s, "train.swa", {"start_fraction", "period"});
            SwaConfig swa;
            swa.start_fraction = field_or(*s, "start_fraction", "train.swa", 0.5);
            swa.period = field_or(*s, "period", "train.swa", 1);
            rc.swa = swa;
        }
    }

    // analysis
    cfg.landscape.alphas = default_alphas();
    cfg.landscape.betas = default_betas();
    cfg.landscape.direction_seed = mix_seed(cfg.seed, 0x1a2d5ULL);
    if (const json* a = get(root, "analysis")) {
        reject_unknown(*a, "analysis", {"margin", "landscape"});
        if (const json* m = get(*a, "margin")) {
            reject_unknown(*m, "analysis.margin", {"mu_step", "mu_max"});
            cfg.margin.mu_step = field_or(*m, "mu_step", "analysis.margin", 0.25);
            cfg.margin.mu_max = field_or(*m, "mu_max", "analysis.margin", 50.0);
        }
        if (const json* l = get(*a, "landscape")) {
            reject_unknown(*l, "analysis.landscape",
                           {"alphas", "betas", "sample_index", "direction_seed"});
            if (const json* v = get(*l, "alphas"))
                cfg.landscape.alphas = as<std::vector<double>>(*v, "analysis.landscape.alphas");
            if (const json* v = get(*l, "betas"))
                cfg.landscape.betas = as<std::vector<double>>(*v, "analysis.landscape.betas");
            cfg.landscape.sample_index =
                field_or<std::size_t>(*l, "sample_index", "analysis.landscape", 0);
            cfg.landscape.direction_seed = field_or(*l, "direction_seed", "analysis.landscape",
                                                    cfg.landscape.direction_seed);
        }
    }

    cfg.validate();
    return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (label.empty()) throw ConfigError("label", "must be nonempty");
    model.validate();
    train.validate();
    if (dataset.source == DatasetConfig::Source::synthetic) {
        if (dataset.n < 2) throw ConfigError("dataset.n", "must be >= 2");
        if (!(dataset.noise >= 0)) throw ConfigError("dataset.noise", "must be >= 0");
    } else {
        if (dataset.images.empty()) throw ConfigError("dataset.images", "must be nonempty");
        if (dataset.labels.empty()) throw ConfigError("dataset.labels", "must be nonempty");
    }
    if (!(dataset.test_fraction > 0 && dataset.test_fraction < 1))
        throw ConfigError("dataset.test_fraction", "must be in (0,1)");
    if (!(margin.mu_step > 0)) throw ConfigError("analysis.margin.mu_step", "must be > 0");
    if (!(margin.mu_max >= margin.mu_step))
        throw ConfigError("analysis.margin.mu_max", "must be >= mu_step");
    if (landscape.alphas.empty() || landscape.betas.empty())
        throw ConfigError("analysis.landscape", "alphas and betas must be nonempty");
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         std::optional<std::uint64_t> seed_override,
                                         std::optional<std::string> precision_override) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return parse(root, seed_override, precision_override);
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        std::optional<std::uint64_t> seed_override,
                                        std::optional<std::string> precision_override) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_experiment_config(ss.str(), seed_override, precision_override);
    } catch (const ConfigError& e) {
        throw ConfigError(e.path.empty() ? path : path + ": " + e.path, e.message);
    }
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    json root;
    root["label"] = cfg.label;
    root["precision"] = cfg.precision;
    root["seed"] = cfg.seed;
    if (!cfg.seeds.empty()) root["seeds"] = cfg.seeds;
    if (!cfg.output_dir.empty()) root["output_dir"] = cfg.output_dir;

    json d;
    if (cfg.dataset.source == DatasetConfig::Source::synthetic) {
        d["source"] = "synthetic";
        d["kind"] = synthetic_kind_name(cfg.dataset.kind);
        d["n"] = cfg.dataset.n;
        d["noise"] = cfg.dataset.noise;
        d["seed"] = cfg.dataset.seed;
    } else {
        d["source"] = "idx";
        d["images"] = cfg.dataset.images;
        d["labels"] = cfg.dataset.labels;
    }
    d["test_fraction"] = cfg.dataset.test_fraction;
    root["dataset"] = d;

    json m;
    m["widths"] = cfg.model.widths;
    m["activation"] = nd::activation_name(cfg.model.activation);
    m["init_seed"] = cfg.model.init_seed;
    root["model"] = m;

    auto attack_json = [](const AttackConfig& a) {
        json j;
        j["epsilon"] = a.epsilon;
        j["steps"] = a.steps;
        j["step_size"] = a.step_size;
        j["random_start"] = a.random_start;
        j["seed"] = a.seed;
        return j;
    };

    json t;
    t["method"] = method_name(cfg.train.method);
    t["epochs"] = cfg.train.epochs;
    t["batch_size"] = cfg.train.batch_size;
    t["lr"] = {{"initial", cfg.train.lr.initial},
               {"decay_factor", cfg.train.lr.decay_factor},
               {"decay_fractions", cfg.train.lr.decay_fractions}};
    t["momentum"] = cfg.train.momentum;
    t["weight_decay"] = cfg.train.weight_decay;
    t["lambda_warmup"] = cfg.train.lambda_warmup;
    t["eps_ramp_epochs"] = cfg.train.eps_ramp_epochs;
    t["attack"] = attack_json(cfg.train.attack);
    t["eval_attack"] = attack_json(cfg.train.eval_attack);
    t["wp"] = {{"gamma", cfg.train.wp.gamma}, {"steps", cfg.train.wp.steps}};
    t["penalty"] = {{"variant", penalty_variant_name(cfg.train.penalty.variant)},
                    {"distance", distance_name(cfg.train.penalty.distance)},
                    {"lambda", cfg.train.penalty.lambda},
                    {"weight_scheme", weight_scheme_name(cfg.train.penalty.weight_scheme)}};
    if (cfg.train.swa)
        t["swa"] = {{"start_fraction", cfg.train.swa->start_fraction},
                    {"period", cfg.train.swa->period}};
    root["train"] = t;

    root["analysis"] = {
        {"margin", {{"mu_step", cfg.margin.mu_step}, {"mu_max", cfg.margin.mu_max}}},
        {"landscape",
         {{"alphas", cfg.landscape.alphas},
          {"betas", cfg.landscape.betas},
          {"sample_index", cfg.landscape.sample_index},
          {"direction_seed", cfg.landscape.direction_seed}}}};

    return root.dump(2) + "\n";
}

SplitResult load_and_split(const DatasetConfig& cfg) {
    Dataset full = cfg.source == DatasetConfig::Source::synthetic
                       ? gen_synthetic(cfg.kind, cfg.n, cfg.noise, cfg.seed)
                       : load_idx(cfg.images, cfg.labels);
    return split(full, cfg.test_fraction, cfg.split_seed);
}

}  // namespace iseat
