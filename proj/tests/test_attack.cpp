#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/model.hpp"
#include "iseat/rng.hpp"

using namespace iseat;
using nd::Activation;

namespace {

ModelParams<double> linear_model(std::size_t d, std::size_t c, std::uint64_t seed) {
    ModelSpec spec{{d, c}, Activation::relu, seed};
    return init_params<double>(spec);
}

ModelParams<double> manual_linear(const std::vector<double>& w_rowmajor, std::size_t d,
                                  std::size_t c) {
    ModelSpec spec{{d, c}, Activation::relu, 0};
    ModelParams<double> p;
    p.spec = spec;
    p.layers.push_back({Tensor<double>({d, c}, std::vector<double>(w_rowmajor)),
                        Tensor<double>({c})});
    return p;
}

double loss_at(const ModelParams<double>& p, const Tensor<double>& x,
               const std::vector<int>& y) {
    return batch_losses(p, x, y)[0];
}

}  // namespace

TEST_CASE("fgsm follows the analytic gradient sign on a linear model") {
    // logits = (x·(1,0), x·(−1,0)); for y=0 the input gradient is p1·(−2, 0)
    const auto p = manual_linear({1.0, -1.0, 0.0, 0.0}, 2, 2);
    Tensor<double> x({1, 2}, {0.5, 0.5});
    const double eps = 0.1;
    const auto delta = fgsm(p, x, {0}, eps);
    CHECK(delta[0] == -eps);
    CHECK(delta[1] == 0.0);
}

TEST_CASE("fgsm with zero gradient returns zero perturbation") {
    const auto p = manual_linear({0, 0, 0, 0}, 2, 2);
    Tensor<double> x({1, 2}, {0.3, 0.9});
    const auto delta = fgsm(p, x, {0}, 0.25);
    CHECK(delta[0] == 0.0);
    CHECK(delta[1] == 0.0);
}

TEST_CASE("fgsm clip at the box boundary zeroes the step") {
    // positive gradient in coordinate 0 and x0 = 1.0: post-clip delta must be 0
    const auto p = manual_linear({-1.0, 1.0, 0.0, 0.0}, 2, 2);
    Tensor<double> x({1, 2}, {1.0, 0.5});
    const auto delta = fgsm(p, x, {0}, 0.1);
    CHECK(delta[0] == 0.0);
}

TEST_CASE("single-step non-random pgd with step epsilon collapses to fgsm") {
    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
        ModelSpec spec{{4, 6, 3}, Activation::tanh, 1000 + static_cast<std::uint64_t>(trial)};
        const auto p = init_params<double>(spec);
        Tensor<double> x({2, 4});
        for (auto& v : x.values()) v = rng.u01();
        const std::vector<int> y{static_cast<int>(rng.below(3)),
                                 static_cast<int>(rng.below(3))};
        AttackConfig cfg;
        cfg.epsilon = 0.07;
        cfg.steps = 1;
        cfg.step_size = cfg.epsilon;
        cfg.random_start = false;
        const auto d1 = pgd(p, x, y, cfg);
        const auto d2 = fgsm(p, x, y, cfg.epsilon);
        CHECK(std::memcmp(d1.data(), d2.data(), d1.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("pgd attains the brute-force corner maximum on binary linear models") {
    Rng rng(17);
    int hits = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t d = 3;
        const auto p = linear_model(d, 2, 5000 + static_cast<std::uint64_t>(trial));
        Tensor<double> x({1, d});
        for (auto& v : x.values()) v = rng.uniform(0.25, 0.75);
        const std::vector<int> y{static_cast<int>(rng.below(2))};
        const double eps = 0.1;

        double best = -1;
        for (int corner = 0; corner < (1 << d); ++corner) {
            Tensor<double> xc = x;
            for (std::size_t i = 0; i < d; ++i)
                xc[i] += (corner >> i) & 1 ? eps : -eps;
            best = std::max(best, loss_at(p, xc, y));
        }

        AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.steps = 20;
        cfg.step_size = eps / 4;
        cfg.random_start = false;
        const auto delta = pgd(p, x, y, cfg);
        const double achieved = loss_at(p, perturbed_input(x, delta), y);
        if (std::abs(achieved - best) <= 1e-8) ++hits;
    }
    CHECK(hits == trials);
}

TEST_CASE("pgd respects the epsilon ball and the [0,1] box exactly") {
    Rng rng(23);
    ModelSpec spec{{5, 8, 2}, Activation::relu, 321};
    const auto p = init_params<double>(spec);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor<double> x({3, 5});
        for (auto& v : x.values()) {
            const double u = rng.u01();
            v = u < 0.1 ? 0.0 : (u > 0.9 ? 1.0 : rng.u01());  // include exact box corners
        }
        const std::vector<int> y{0, 1, 1};
        AttackConfig cfg;
        cfg.epsilon = 0.3;
        cfg.steps = 5;
        cfg.step_size = 0.1;
        cfg.random_start = true;
        cfg.seed = 70 + static_cast<std::uint64_t>(trial);
        const auto delta = pgd(p, x, y, cfg);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            CHECK(std::abs(delta[i]) <= cfg.epsilon);
            const double z = x[i] + delta[i];
            CHECK(z >= 0.0);
            CHECK(z <= 1.0);
        }
    }
}

TEST_CASE("pgd is deterministic given the config seed") {
    ModelSpec spec{{4, 4, 2}, Activation::relu, 3};
    const auto p = init_params<double>(spec);
    Tensor<double> x({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.9, 0.8, 0.7, 0.6});
    const std::vector<int> y{0, 1};
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.steps = 7;
    cfg.step_size = 0.02;
    cfg.random_start = true;
    cfg.seed = 12345;
    const auto d1 = pgd(p, x, y, cfg);
    const auto d2 = pgd(p, x, y, cfg);
    CHECK(std::memcmp(d1.data(), d2.data(), d1.size() * sizeof(double)) == 0);

    // with one tiny step the random start dominates, so seeds must matter
    cfg.steps = 1;
    cfg.step_size = 1e-6;
    const auto s1 = pgd(p, x, y, cfg);
    cfg.seed = 54321;
    const auto s2 = pgd(p, x, y, cfg);
    CHECK(std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(double)) != 0);
}

TEST_CASE("first-order Taylor residual shrinks quadratically") {
    Rng rng(29);
    double ratio_sum = 0;
    int cases = 0;
    for (int trial = 0; trial < 20; ++trial) {
        ModelSpec spec{{4, 8, 3}, Activation::tanh, 9000 + static_cast<std::uint64_t>(trial)};
        const auto p = init_params<double>(spec);
        Tensor<double> x({4});
        for (auto& v : x.values()) v = rng.uniform(0.3, 0.7);
        const int y = static_cast<int>(rng.below(3));

        Tensor<double> dir({4});
        for (auto& v : dir.values()) v = rng.uniform(-1.0, 1.0);
        const double scale = 1e-2 / nd::linf_norm(dir);

        const double base = cross_entropy(forward_logits_single(p, x), y);
        const auto grad = input_gradient_single(p, x, y);

        auto residual = [&](double mult) {
            Tensor<double> z = x;
            double lin = 0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double di = mult * scale * dir[i];
                z[i] += di;
                lin += grad[i] * di;
            }
            return std::abs(cross_entropy(forward_logits_single(p, z), y) - base - lin);
        };
        const double r1 = residual(1.0);
        const double r2 = residual(0.5);
        if (r1 < 1e-10 || r2 < 1e-12) continue;  // negligible curvature along this direction
        ratio_sum += r1 / r2;
        ++cases;
    }
    REQUIRE(cases >= 15);
    const double mean_ratio = ratio_sum / cases;
    CHECK(mean_ratio >= 3.0);
    CHECK(mean_ratio <= 5.0);
}

TEST_CASE("margin search brackets the analytic flip distance of a 1-D classifier") {
    // logits = (w·x + b, 0): prediction flips where w·x + b = 0
    auto p = manual_linear({1.0, 0.0}, 1, 2);
    p.layers[0].weight.at(0, 0) = 2.0;
    p.layers[0].bias[0] = -1.0;  // flip at x = 0.5
    Tensor<double> x({1}, {0.2});
    Tensor<double> delta({1}, {0.05});  // direction +1 after normalization

    const double analytic = 0.3;  // distance from 0.2 to 0.5
    const double mu_step = 0.01;
    const auto res = margin_search(p, x, delta, mu_step, 50.0);
    CHECK(res.flipped);
    CHECK(res.mu >= analytic - 1e-12);
    CHECK(res.mu <= analytic + mu_step + 1e-12);
    CHECK(res.direction_norm == doctest::Approx(0.05));
}

TEST_CASE("margin search returns the sentinel when no lattice point flips") {
    auto p = manual_linear({2.0, 0.0}, 1, 2);
    p.layers[0].bias[0] = -1.0;               // flip at x = 0.5
    Tensor<double> x({1}, {0.2});
    Tensor<double> delta({1}, {-0.05});       // anti-aligned: walks to the clip boundary at 0
    const auto res = margin_search(p, x, delta, 0.25, 50.0);
    CHECK_FALSE(res.flipped);
    CHECK(res.mu == 50.0);
}

TEST_CASE("margin search rejects a zero-norm direction and honors the default lattice") {
    const auto p = manual_linear({1.0, 0.0}, 1, 2);
    Tensor<double> x({1}, {0.5});
    Tensor<double> zero({1}, {0.0});
    CHECK_THROWS_AS(margin_search(p, x, zero), ShapeError);

    Tensor<double> d({1}, {1.0});
    const auto res = margin_search(p, x, d);  // defaults: 0.25 lattice up to 50
    CHECK(res.mu <= 50.0);
    CHECK(std::fmod(res.mu, 0.25) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("margin is monotone under lattice refinement") {
    ModelSpec spec{{2, 6, 2}, Activation::tanh, 55};
    const auto p = init_params<double>(spec);
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor<double> x({2}, {rng.u01(), rng.u01()});
        Tensor<double> dir({2}, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        if (nd::l2_norm(dir) == 0) continue;
        const auto coarse = margin_search(p, x, dir, 0.5, 20.0);
        const auto fine = margin_search(p, x, dir, 0.25, 20.0);
        if (coarse.flipped) {
            CHECK(fine.flipped);
            CHECK(fine.mu <= coarse.mu + 1e-12);
            CHECK(fine.mu >= coarse.mu - 0.5 - 1e-12);
        }
    }
}

TEST_CASE("loss landscape grid anchors at the clean loss and matches direct evaluation") {
    ModelSpec spec{{3, 6, 2}, Activation::softplus, 71};
    const auto p = init_params<double>(spec);
    Tensor<double> x({3}, {0.4, 0.5, 0.6});
    Tensor<double> delta({3}, {0.05, -0.03, 0.02});
    const int y = 1;
    const std::vector<double> alphas{-0.5, 0.0, 0.5, 1.5};
    const std::vector<double> betas{-0.25, 0.0, 0.25};
    const double eps = 0.1;

    const auto grid = loss_landscape(p, x, y, delta, alphas, betas, eps, 7);
    CHECK(grid.alpha_budget == doctest::Approx(nd::l2_norm(delta)));

    // (alpha=0, beta=0) equals the clean loss exactly
    const double clean = cross_entropy(forward_logits_single(p, x), y);
    CHECK(grid.at(1, 1) == clean);

    // every cell equals an independent evaluation at the clipped offset point
    Rng rng(7);
    std::vector<double> u(3);
    for (auto& v : u) v = rng.uniform(-eps, eps);
    const double unorm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    const double dnorm = nd::l2_norm(delta);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        for (std::size_t j = 0; j < betas.size(); ++j) {
            Tensor<double> z({3});
            for (std::size_t k = 0; k < 3; ++k)
                z[k] = std::clamp(
                    x[k] + alphas[i] * delta[k] / dnorm + betas[j] * u[k] / unorm, 0.0, 1.0);
            const double direct = cross_entropy(forward_logits_single(p, z), y);
            CHECK(grid.at(i, j) == doctest::Approx(direct).epsilon(1e-12));
        }
    }

    Tensor<double> zero({3});
    CHECK_THROWS_AS(loss_landscape(p, x, y, zero, alphas, betas, eps, 7), ShapeError);
}
