#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/model.hpp"

namespace iseat {

// Checkpoint document: {spec, per-layer flattened arrays (row-major), precision
// tag, seed, epoch}. f64 values are written with 17 significant digits and f32
// with 9, which round-trips both bit-exactly through decimal.
struct Checkpoint {
    ModelSpec spec;
    std::string precision;  // "f32" | "f64"
    std::uint64_t seed = 0;
    int epoch = 0;
    std::vector<std::vector<double>> weights;  // per layer, row-major
    std::vector<std::vector<double>> biases;

    template <typename T>
    ModelParams<T> params() const {
        ModelParams<T> p;
        p.spec = spec;
        for (std::size_t n = 0; n + 1 < spec.widths.size(); ++n) {
            Layer<T> l{Tensor<T>({spec.widths[n], spec.widths[n + 1]}),
                       Tensor<T>({spec.widths[n + 1]})};
            if (weights[n].size() != l.weight.size() || biases[n].size() != l.bias.size())
                throw ShapeError("checkpoint layer " + std::to_string(n) +
                                 " array length inconsistent with spec");
            for (std::size_t i = 0; i < l.weight.size(); ++i)
                l.weight[i] = static_cast<T>(weights[n][i]);
            for (std::size_t i = 0; i < l.bias.size(); ++i)
                l.bias[i] = static_cast<T>(biases[n][i]);
            p.layers.push_back(std::move(l));
        }
        p.check_consistent();
        return p;
    }
};

Checkpoint load_checkpoint(const std::string& path);

namespace detail {

inline void append_number(std::string& out, double v, int sig_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", sig_digits, v);
    out += buf;
}

template <typename T>
void append_array(std::string& out, const Tensor<T>& t, int sig_digits) {
    out += '[';
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) out += ',';
        append_number(out, static_cast<double>(t[i]), sig_digits);
    }
    out += ']';
}

}  // namespace detail

template <typename T>
std::string checkpoint_to_json(const ModelParams<T>& p, int epoch) {
    p.check_consistent();
    constexpr bool f64 = std::is_same_v<T, double>;
    const int digits = f64 ? 17 : 9;
    std::string out = "{\n  \"spec\": {\"widths\": [";
    for (std::size_t i = 0; i < p.spec.widths.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(p.spec.widths[i]);
    }
    out += "], \"activation\": \"";
    out += nd::activation_name(p.spec.activation);
    out += "\", \"init_seed\": " + std::to_string(p.spec.init_seed) + "},\n";
    out += "  \"precision\": \"" + std::string(f64 ? "f64" : "f32") + "\",\n";
    out += "  \"seed\": " + std::to_string(p.spec.init_seed) + ",\n";
    out += "  \"epoch\": " + std::to_string(epoch) + ",\n";
    out += "  \"layers\": [\n";
    for (std::size_t n = 0; n < p.layers.size(); ++n) {
        out += "    {\"weight\": ";
        detail::append_array(out, p.layers[n].weight, digits);
        out += ", \"bias\": ";
        detail::append_array(out, p.layers[n].bias, digits);
        out += n + 1 < p.layers.size() ? "},\n" : "}\n";
    }
    out += "  ]\n}\n";
    return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& p, int epoch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    const std::string doc = checkpoint_to_json(p, epoch);
    out.write(doc.data(), static_cast<std::streamsize>(doc.size()));
    if (!out) throw IoError("short write to checkpoint " + path);
}

}  // namespace iseat
