#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "iseat/checkpoint.hpp"
#include "iseat/gradcheck.hpp"
#include "iseat/model.hpp"
#include "iseat/rng.hpp"

using namespace iseat;
using nd::Activation;
using nd::compare_gradients;
using nd::finite_diff_gradient;

namespace {

ModelParams<double> zero_model(std::vector<std::size_t> widths) {
    ModelSpec spec{std::move(widths), Activation::relu, 0};
    ModelParams<double> p;
    p.spec = spec;
    for (std::size_t n = 0; n + 1 < spec.widths.size(); ++n)
        p.layers.push_back({Tensor<double>({spec.widths[n], spec.widths[n + 1]}),
                            Tensor<double>({spec.widths[n + 1]})});
    return p;
}

}  // namespace

TEST_CASE("zero-weight network maps everything to class 0") {
    const auto p = zero_model({3, 4, 2});
    Tensor<double> x({2, 3}, {0.1, 0.9, 0.4, 0.0, 1.0, 0.5});
    const auto logits = forward_logits(p, x);
    for (const double v : logits.values()) CHECK(v == 0.0);
    const auto preds = predict(p, x);
    CHECK(preds == std::vector<int>{0, 0});

    const auto grad = input_gradient(p, x, {0, 1});
    for (const double v : grad.values()) CHECK(v == 0.0);
}

TEST_CASE("identity single-layer network passes logits through") {
    auto p = zero_model({2, 2});
    p.layers[0].weight.at(0, 0) = 1.0;
    p.layers[0].weight.at(1, 1) = 1.0;
    Tensor<double> x({1, 2}, {2.0, -1.0});
    const auto logits = forward_logits(p, x);
    CHECK(logits.at(0, 0) == 2.0);
    CHECK(logits.at(0, 1) == -1.0);
    CHECK(predict(p, x)[0] == 0);
}

TEST_CASE("seeded 2-16-2 network matches the golden record in both precisions") {
    ModelSpec spec{{2, 16, 2}, Activation::relu, 42};
    const auto p64 = init_params<double>(spec);
    const auto l64 = forward_logits(p64, Tensor<double>({1, 2}, {0.3, 0.7}));
    CHECK(l64[0] == doctest::Approx(0.15980018661833365).epsilon(1e-15));
    CHECK(l64[1] == doctest::Approx(0.04338318775855067).epsilon(1e-15));

    const auto p32 = init_params<float>(spec);
    const auto l32 = forward_logits(p32, Tensor<float>({1, 2}, {0.3f, 0.7f}));
    CHECK(static_cast<double>(l32[0]) == doctest::Approx(0.15980018661833365).epsilon(1e-5));
    CHECK(static_cast<double>(l32[1]) == doctest::Approx(0.04338318775855067).epsilon(1e-4));
}

TEST_CASE("cross-entropy values and stability") {
    CHECK(cross_entropy(Tensor<double>({2}, {0.0, 0.0}), 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const double big = cross_entropy(Tensor<double>({2}, {1000.0, 0.0}), 0);
    CHECK(big >= 0.0);
    CHECK(big < 1e-300);
    CHECK(cross_entropy(Tensor<double>({3}, {1.0, 2.0, 3.0}), 2) ==
          doctest::Approx(0.40760596444438030).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(Tensor<double>({1}, {0.5}), 0), ShapeError);
    CHECK_THROWS_AS(cross_entropy(Tensor<double>({2}, {0.5, 0.1}), 2), ShapeError);
}

TEST_CASE("loss is nonnegative on random logits") {
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        Tensor<double> l({4});
        for (auto& v : l.values()) v = rng.uniform(-10, 10);
        CHECK(cross_entropy(l, static_cast<int>(rng.below(4))) >= 0.0);
    }
}

TEST_CASE("linear model input gradient matches the analytic softmax formula") {
    ModelSpec spec{{3, 3}, Activation::relu, 5};
    const auto p = init_params<double>(spec);
    Tensor<double> x({1, 3}, {0.2, 0.5, 0.8});
    const int y = 1;

    const auto grad = input_gradient(p, x, {y});
    const auto probs = softmax(forward_logits(p, x));
    for (std::size_t i = 0; i < 3; ++i) {
        double expect = 0;
        for (std::size_t j = 0; j < 3; ++j)
            expect += (probs[j] - (static_cast<int>(j) == y ? 1.0 : 0.0)) *
                      p.layers[0].weight.at(i, j);
        CHECK(grad[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("input gradient matches finite differences on a tanh network") {
    ModelSpec spec{{4, 6, 3}, Activation::tanh, 11};
    const auto p = init_params<double>(spec);
    Rng rng(3);
    Tensor<double> x({1, 4});
    for (auto& v : x.values()) v = rng.uniform(0.1, 0.9);
    const std::vector<int> y{2};

    const auto analytic = input_gradient(p, x, y);
    const auto numeric = finite_diff_gradient<double>(
        [&](const Tensor<double>& px) {
            return cross_entropy(forward_logits_single(
                                     p, Tensor<double>({px.size()}, px.values())),
                                 2);
        },
        x, 1e-5);
    CHECK(compare_gradients(analytic, numeric, 1e-5).max_relative_error < 1e-5);
}

TEST_CASE("param gradient uses mean reduction") {
    ModelSpec spec{{2, 4, 2}, Activation::tanh, 17};
    const auto p = init_params<double>(spec);
    Tensor<double> one({1, 2}, {0.4, 0.6});
    Tensor<double> two({2, 2}, {0.4, 0.6, 0.4, 0.6});

    const auto g1 = param_gradient(p, one, {1});
    const auto g2 = param_gradient(p, two, {1, 1});
    for (std::size_t n = 0; n < g1.layers.size(); ++n) {
        for (std::size_t i = 0; i < g1.layers[n].weight.size(); ++i)
            CHECK(g1.layers[n].weight[i] ==
                  doctest::Approx(g2.layers[n].weight[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < g1.layers[n].bias.size(); ++i)
            CHECK(g1.layers[n].bias[i] == doctest::Approx(g2.layers[n].bias[i]).epsilon(1e-12));
    }
}

TEST_CASE("bias gradient on zero inputs equals uniform minus label frequency") {
    // single linear layer, zero weights and biases, zero inputs: logits are 0,
    // softmax is uniform, so d(mean CE)/db_j = 1/C − freq(j)
    auto p = zero_model({3, 4});
    Tensor<double> x({4, 3});  // zeros
    const std::vector<int> y{0, 1, 2, 3};
    const auto g = param_gradient(p, x, y);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(g.layers[0].bias[j] == doctest::Approx(0.25 - 0.25).epsilon(1e-15));

    const std::vector<int> skewed{0, 0, 0, 1};
    const auto g2 = param_gradient(p, x, skewed);
    CHECK(g2.layers[0].bias[0] == doctest::Approx(0.25 - 0.75).epsilon(1e-12));
    CHECK(g2.layers[0].bias[1] == doctest::Approx(0.25 - 0.25).epsilon(1e-12));
    CHECK(g2.layers[0].bias[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("param gradient matches finite differences on every parameter of a 2-4-2 net") {
    ModelSpec spec{{2, 4, 2}, Activation::softplus, 23};
    auto p = init_params<double>(spec);
    Tensor<double> x({3, 2}, {0.1, 0.9, 0.5, 0.5, 0.8, 0.2});
    const std::vector<int> y{0, 1, 1};

    const auto analytic = param_gradient(p, x, y);
    for (std::size_t n = 0; n < p.layers.size(); ++n) {
        for (const bool weight_part : {true, false}) {
            Tensor<double>& target = weight_part ? p.layers[n].weight : p.layers[n].bias;
            const Tensor<double>& agrad =
                weight_part ? analytic.layers[n].weight : analytic.layers[n].bias;
            const auto numeric = finite_diff_gradient<double>(
                [&](const Tensor<double>& pt) {
                    Tensor<double> saved = target;
                    target = pt;
                    const double loss = mean_loss(p, x, y);
                    target = saved;
                    return loss;
                },
                target, 1e-5);
            CHECK(compare_gradients(agrad, numeric, 1e-5).max_relative_error < 1e-5);
        }
    }
}

TEST_CASE("softmax probabilities sum to one") {
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        Tensor<double> l({5});
        for (auto& v : l.values()) v = rng.uniform(-30, 30);
        const auto p = softmax(l);
        double s = 0;
        for (const double v : p) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("cross-entropy is invariant to constant logit shifts") {
    Rng rng(37);
    for (int i = 0; i < 20; ++i) {
        Tensor<double> l({4});
        for (auto& v : l.values()) v = rng.uniform(-5, 5);
        const double base = cross_entropy(l, 2);
        Tensor<double> shifted = l;
        const double c = rng.uniform(-100, 100);
        for (auto& v : shifted.values()) v += c;
        CHECK(std::abs(cross_entropy(shifted, 2) - base) <= 1e-10);
    }
}

TEST_CASE("argmax is invariant under positive rescaling") {
    ModelSpec spec{{2, 8, 3}, Activation::relu, 77};
    const auto p = init_params<double>(spec);
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        Tensor<double> x({1, 2}, {rng.u01(), rng.u01()});
        const auto logits = forward_logits(p, x);
        Tensor<double> row({3});
        Tensor<double> scaled({3});
        for (std::size_t j = 0; j < 3; ++j) {
            row[j] = logits.at(0, j);
            scaled[j] = 7.25 * logits.at(0, j);
        }
        CHECK(predict_row(row, 0) == predict_row(scaled, 0));
    }
}

TEST_CASE("checkpoint round-trip is bit-exact at 64-bit") {
    ModelSpec spec{{3, 5, 2}, Activation::tanh, 99};
    const auto p = init_params<double>(spec);
    const auto path = std::filesystem::temp_directory_path() / "iseat_ck_test.json";
    save_checkpoint(path.string(), p, 7);

    const auto ck = load_checkpoint(path.string());
    CHECK(ck.precision == "f64");
    CHECK(ck.epoch == 7);
    CHECK(ck.spec.widths == spec.widths);
    const auto q = ck.params<double>();
    for (std::size_t n = 0; n < p.layers.size(); ++n) {
        CHECK(std::memcmp(p.layers[n].weight.data(), q.layers[n].weight.data(),
                          p.layers[n].weight.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(p.layers[n].bias.data(), q.layers[n].bias.data(),
                          p.layers[n].bias.size() * sizeof(double)) == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint round-trip is exact for f32 as well") {
    ModelSpec spec{{2, 3, 2}, Activation::relu, 13};
    const auto p = init_params<float>(spec);
    const auto path = std::filesystem::temp_directory_path() / "iseat_ck32_test.json";
    save_checkpoint(path.string(), p, 1);
    const auto ck = load_checkpoint(path.string());
    CHECK(ck.precision == "f32");
    const auto q = ck.params<float>();
    for (std::size_t n = 0; n < p.layers.size(); ++n)
        for (std::size_t i = 0; i < p.layers[n].weight.size(); ++i)
            CHECK(p.layers[n].weight[i] == q.layers[n].weight[i]);
    std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are rejected") {
    const auto path = std::filesystem::temp_directory_path() / "iseat_ck_bad.json";
    {
        std::ofstream f(path);
        f << "{\"not\": \"a checkpoint\"}";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), IoError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.json"), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("batch validation enforces the [0,1] box and label range") {
    LabeledBatch b;
    b.inputs = nd::Tensor<double>({1, 2}, {0.5, 1.5});
    b.labels = {0};
    CHECK_THROWS_AS(b.validate(2, 2), NumericError);
    b.inputs = nd::Tensor<double>({1, 2}, {0.5, 0.5});
    b.labels = {4};
    CHECK_THROWS_AS(b.validate(2, 2), ShapeError);
    b.labels = {1};
    CHECK_NOTHROW(b.validate(2, 2));
}
