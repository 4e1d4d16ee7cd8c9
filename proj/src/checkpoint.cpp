#include "iseat/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace iseat {

namespace {

nd::Activation activation_from_name(const std::string& s) {
    if (s == "relu") return nd::Activation::relu;
    if (s == "tanh") return nd::Activation::tanh;
    if (s == "softplus") return nd::Activation::softplus;
    throw ConfigError("spec.activation", "unknown activation '" + s + "'");
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path + " is not valid JSON: " + e.what());
    }
    try {
        Checkpoint ck;
        const auto& spec = j.at("spec");
        for (const auto& w : spec.at("widths"))
            ck.spec.widths.push_back(w.get<std::size_t>());
        ck.spec.activation = activation_from_name(spec.at("activation").get<std::string>());
        ck.spec.init_seed = spec.at("init_seed").get<std::uint64_t>();
        ck.precision = j.at("precision").get<std::string>();
        if (ck.precision != "f32" && ck.precision != "f64")
            throw IoError("checkpoint " + path + ": unknown precision tag '" + ck.precision +
                          "'");
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.epoch = j.at("epoch").get<int>();
        for (const auto& layer : j.at("layers")) {
            ck.weights.push_back(layer.at("weight").get<std::vector<double>>());
            ck.biases.push_back(layer.at("bias").get<std::vector<double>>());
        }
        ck.spec.validate();
        if (ck.weights.size() != ck.spec.num_layers())
            throw ShapeError("checkpoint layer count inconsistent with spec");
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path + " is malformed: " + e.what());
    }
}

}  // namespace iseat
