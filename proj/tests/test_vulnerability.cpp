#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/model.hpp"
#include "iseat/rng.hpp"
#include "iseat/vulnerability.hpp"

using namespace iseat;
using nd::Activation;

TEST_CASE("av of the zero perturbation is zero") {
    ModelSpec spec{{2, 4, 2}, Activation::tanh, 5};
    const auto p = init_params<double>(spec);
    Tensor<double> x({2}, {0.3, 0.6});
    Tensor<double> zero({2});
    CHECK(av(p, x, 1, zero) == 0.0);
}

TEST_CASE("av can be negative when the attack direction lowers the loss") {
    // binary linear model: moving against the gradient reduces the loss
    ModelSpec spec{{1, 2}, Activation::relu, 0};
    ModelParams<double> p;
    p.spec = spec;
    p.layers.push_back({Tensor<double>({1, 2}, {4.0, -4.0}), Tensor<double>({2})});
    Tensor<double> x({1}, {0.5});
    Tensor<double> delta({1}, {0.1});  // increases logit margin for class 0
    CHECK(av(p, x, 0, delta) < 0.0);
}

TEST_CASE("av matches the closed-form loss difference on a linear model") {
    ModelSpec spec{{2, 2}, Activation::relu, 9};
    const auto p = init_params<double>(spec);
    Tensor<double> x({2}, {0.4, 0.7});
    Tensor<double> delta({2}, {0.05, -0.05});
    const int y = 1;
    const double direct = cross_entropy(forward_logits_single(
                              p, Tensor<double>({2}, {0.45, 0.65})), y) -
                          cross_entropy(forward_logits_single(p, x), y);
    CHECK(av(p, x, y, delta) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("joint av reduces to av when v is zero and ascends for small gamma") {
    ModelSpec spec{{2, 5, 2}, Activation::tanh, 13};
    const auto p = init_params<double>(spec);
    Tensor<double> x({2}, {0.2, 0.9});
    Tensor<double> delta({2}, {0.03, -0.06});
    const auto zero_v = WeightPerturbation<double>::zeros_like(p);
    CHECK(av_joint(p, x, 0, delta, zero_v) == av(p, x, 0, delta));

    Tensor<double> zero_d({2});
    CHECK(av_joint(p, x, 0, zero_d, zero_v) == 0.0);

    // v from the one-step ascent direction on this one-sample batch
    Tensor<double> adv({1, 2}, {0.23, 0.84});
    WeightPerturbConfig wcfg;
    for (const double gamma : {1e-3, 1e-4}) {
        wcfg.gamma = gamma;
        const auto v = awp_direction(p, adv, std::vector<int>{0}, wcfg);
        Tensor<double> d({2}, {0.03, -0.06});
        CHECK(av_joint(p, x, 0, d, v) >= av(p, x, 0, d) - 1e-8);
    }
}

TEST_CASE("av statistics of a two-point distribution") {
    const auto s = av_stats({0.0, 1.0});
    CHECK(s.sd == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.frac_ge_1 == 0.5);
    CHECK(s.frac_le_0 == 0.5);
    CHECK(s.top10_mean == 1.0);
    CHECK(s.bot10_mean == 0.0);
}

TEST_CASE("av statistics of a constant list have zero spread") {
    const auto s = av_stats({0.7, 0.7, 0.7});
    CHECK(s.sd == 0.0);
    CHECK(s.top10_mean == doctest::Approx(0.7));
    CHECK(s.bot10_mean == doctest::Approx(0.7));
    CHECK(s.frac_ge_1 == 0.0);
    CHECK(s.frac_le_0 == 0.0);
}

TEST_CASE("av statistics match an independent recomputation on 1000 random values") {
    Rng rng(99);
    std::vector<double> avs(1000);
    for (auto& a : avs) a = rng.uniform(-0.5, 2.0);

    const auto s = av_stats(avs);

    // oracle: direct E[x²]−E[x]² route and explicit sorting
    double m1 = 0, m2 = 0;
    for (const double a : avs) {
        m1 += a;
        m2 += a * a;
    }
    m1 /= 1000.0;
    m2 /= 1000.0;
    CHECK(s.sd == doctest::Approx(std::sqrt(m2 - m1 * m1)).epsilon(1e-10));

    std::vector<double> sorted = avs;
    std::sort(sorted.begin(), sorted.end());
    double top = 0, bot = 0;
    for (int i = 0; i < 100; ++i) {
        bot += sorted[i];
        top += sorted[999 - i];
    }
    CHECK(s.top10_mean == doctest::Approx(top / 100.0).epsilon(1e-12));
    CHECK(s.bot10_mean == doctest::Approx(bot / 100.0).epsilon(1e-12));
    CHECK(s.top10_mean >= s.bot10_mean);

    std::size_t ge1 = 0, le0 = 0;
    for (const double a : avs) {
        ge1 += a >= 1.0;
        le0 += a <= 0.0;
    }
    CHECK(s.frac_ge_1 == doctest::Approx(ge1 / 1000.0));
    CHECK(s.frac_le_0 == doctest::Approx(le0 / 1000.0));

    CHECK_THROWS_AS(av_stats({}), ShapeError);
}

TEST_CASE("ceil rule keeps the top/bottom means defined for any size") {
    const auto s = av_stats({0.2});  // ⌈0.1·1⌉ = 1
    CHECK(s.top10_mean == 0.2);
    CHECK(s.bot10_mean == 0.2);
}

TEST_CASE("linear weights follow the worked example with stable ties") {
    const auto bv = linear_weights({0.9, 0.1, 0.5, 0.5});
    CHECK(bv.weights == std::vector<double>{1.0, 0.25, 0.75, 0.5});
    CHECK(bv.ranks == std::vector<int>{0, 3, 1, 2});
}

TEST_CASE("a single instance always gets weight one") {
    const auto bv = linear_weights({-2.3});
    CHECK(bv.weights == std::vector<double>{1.0});
    CHECK(bv.ranks == std::vector<int>{0});
}

TEST_CASE("linear weights form the arithmetic lattice {1−k/m}") {
    Rng rng(101);
    for (std::size_t m = 1; m <= 64; ++m) {
        std::vector<double> avs(m);
        for (auto& a : avs) a = rng.uniform(-1, 3);
        const auto bv = linear_weights(avs);

        std::vector<int> ranks = bv.ranks;
        std::sort(ranks.begin(), ranks.end());
        for (std::size_t k = 0; k < m; ++k) CHECK(ranks[k] == static_cast<int>(k));

        std::vector<double> ws = bv.weights;
        std::sort(ws.begin(), ws.end());
        double sum = 0;
        for (std::size_t k = 0; k < m; ++k) {
            CHECK(ws[k] == doctest::Approx(static_cast<double>(k + 1) / m).epsilon(1e-15));
            sum += ws[k];
        }
        CHECK(sum == doctest::Approx((m + 1) / 2.0).epsilon(1e-12));

        const std::size_t argmax = static_cast<std::size_t>(
            std::max_element(avs.begin(), avs.end()) - avs.begin());
        CHECK(bv.weights[argmax] == 1.0);
        CHECK(*std::min_element(bv.weights.begin(), bv.weights.end()) ==
              doctest::Approx(1.0 / m).epsilon(1e-15));
    }
}

TEST_CASE("weights depend on ranks only: invariant under monotone transforms") {
    Rng rng(103);
    std::vector<double> avs(17);
    for (auto& a : avs) a = rng.uniform(-2, 2);
    std::vector<double> exp_avs(17);
    for (std::size_t i = 0; i < avs.size(); ++i) exp_avs[i] = std::exp(avs[i]);

    const auto a = linear_weights(avs);
    const auto b = linear_weights(exp_avs);
    CHECK(a.weights == b.weights);
    CHECK(a.ranks == b.ranks);
}

TEST_CASE("alternative weight schemes: unweighted and top10") {
    const std::vector<double> avs{0.5, 2.0, -1.0, 0.7, 0.1, 0.3, 1.4, 0.2, 0.9, 0.6, 1.1, 0.4};
    const auto uni = rank_weights(avs, WeightScheme::unweighted);
    for (const double w : uni.weights) CHECK(w == 1.0);

    const auto top = rank_weights(avs, WeightScheme::top10);  // ⌈1.2⌉ = 2 carriers
    std::size_t ones = 0;
    for (const double w : top.weights) {
        CHECK((w == 0.0 || w == 1.0));
        ones += w == 1.0;
    }
    CHECK(ones == 2);
    CHECK(top.weights[1] == 1.0);   // av 2.0
    CHECK(top.weights[6] == 1.0);   // av 1.4
}

TEST_CASE("batched av agrees with the per-sample operation") {
    ModelSpec spec{{2, 4, 2}, Activation::tanh, 21};
    const auto p = init_params<double>(spec);
    Tensor<double> x({3, 2}, {0.2, 0.4, 0.6, 0.8, 0.5, 0.5});
    Tensor<double> delta({3, 2}, {0.05, -0.05, 0.0, 0.02, -0.01, 0.03});
    const std::vector<int> y{0, 1, 0};
    const Tensor<double> adv = perturbed_input(x, delta);
    const auto avs = batch_av(p, x, adv, y);
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor<double> xi({2}, {x.at(i, 0), x.at(i, 1)});
        Tensor<double> di({2}, {delta.at(i, 0), delta.at(i, 1)});
        CHECK(avs[i] == doctest::Approx(av(p, xi, y[i], di)).epsilon(1e-12));
    }
}
