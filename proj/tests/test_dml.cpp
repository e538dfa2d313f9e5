#include <doctest.h>

#include <cmath>

#include "av/dml.hpp"
#include "av/optim.hpp"

using namespace av;
using namespace av::dml;

TEST_CASE("project: zero parameters give the zero LEV") {
    auto p = DmlParams::zeros(4, 6);
    CHECK(project(Vec::Ones(6), p).norm() == 0.0);
}

TEST_CASE("project: scalar evaluation") {
    auto p = DmlParams::zeros(1, 1);
    p.weight(0, 0) = 1.0;
    Vec x(1);
    x << 0.5;
    CHECK(project(x, p)[0] == doctest::Approx(std::tanh(0.5)));
}

TEST_CASE("project: outputs bounded by one") {
    Rng rng(5);
    auto p = DmlParams::init(8, 8, rng, 1.5);
    for (int k = 0; k < 30; ++k) {
        const Vec x = Vec::NullaryExpr(8, [&] { return rng.gaussian(0.0, 2.0); });
        CHECK(project(x, p).array().abs().maxCoeff() < 1.0);
    }
}

TEST_CASE("distance: fixtures and symmetry") {
    Vec a(2), b(2);
    a << 1.0, 0.0;
    b << 0.0, 1.0;
    CHECK(distance(a, a) == 0.0);
    CHECK(distance(a, b) == doctest::Approx(2.0));
    CHECK(distance(a, b) == distance(b, a));
    CHECK_THROWS_AS(distance(a, Vec::Zero(3)), DimensionMismatch);

    // tanh-bounded LEVs of dimension 64 stay below the 4 * 64 bound.
    Rng rng(2);
    const Vec y1 = Vec::NullaryExpr(64, [&] { return std::tanh(rng.gaussian(0.0, 3.0)); });
    const Vec y2 = Vec::NullaryExpr(64, [&] { return std::tanh(rng.gaussian(0.0, 3.0)); });
    CHECK(distance(y1, y2) < 256.0);
}

TEST_CASE("kernel_prob: fixtures") {
    CHECK(kernel_prob(0.0, 1.0, 1.0) == doctest::Approx(1.0));
    CHECK(kernel_prob(std::log(2.0), 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(kernel_prob(2.0, 0.5, 2.0) == doctest::Approx(std::exp(-2.0)));
    CHECK_THROWS_AS(kernel_prob(1.0, 0.0, 1.0), InvalidHyperparam);
    CHECK_THROWS_AS(kernel_prob(1.0, 1.0, -1.0), InvalidHyperparam);
}

TEST_CASE("kernel_prob: strictly decreasing in the distance") {
    double prev = kernel_prob(0.0, 0.7, 1.3);
    for (double d = 0.1; d < 5.0; d += 0.1) {
        const double cur = kernel_prob(d, 0.7, 1.3);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("dml_loss: fixtures and zero regions") {
    CHECK(dml_loss(0.95, 1, 0.91, 0.09) == 0.0);
    CHECK(dml_loss(0.81, 1, 0.91, 0.09) == doctest::Approx(0.01));
    CHECK(dml_loss(0.29, 0, 0.91, 0.09) == doctest::Approx(0.04));
    CHECK_THROWS_AS(dml_loss(0.5, 1, 0.09, 0.91), InvalidThresholds);

    // Loss is zero exactly on the hinge-satisfied side.
    for (double p = 0.0; p <= 1.0; p += 0.01) {
        const double ls = dml_loss(p, 1, 0.91, 0.09);
        const double ld = dml_loss(p, 0, 0.91, 0.09);
        CHECK((ls == 0.0) == (p >= 0.91));
        CHECK((ld == 0.0) == (p <= 0.09));
    }
}

TEST_CASE("pair kernel probability is swap invariant") {
    Rng rng(9);
    auto p = DmlParams::init(5, 7, rng);
    const Vec x1 = Vec::NullaryExpr(7, [&] { return rng.gaussian(0.0, 1.0); });
    const Vec x2 = Vec::NullaryExpr(7, [&] { return rng.gaussian(0.0, 1.0); });
    CHECK(pair_forward(x1, x2, p).p == pair_forward(x2, x1, p).p);
}

TEST_CASE("dml_backward: flat hinge region gives zero gradients") {
    Rng rng(13);
    auto p = DmlParams::init(3, 3, rng, 0.01);
    // Tiny weights keep the LEVs nearly equal, so the kernel sits near 1,
    // above tau_s: the same-author loss is flat there.
    const Vec x1 = Vec::Ones(3) * 0.1;
    const Vec x2 = Vec::Ones(3) * 0.1;
    const auto c = pair_forward(x1, x2, p);
    REQUIRE(c.p >= 0.91);
    auto g = p.zeros_like();
    dml_backward(c, p, 1, 0.91, 0.09, 1.0, g);
    CHECK(g.weight.norm() == 0.0);
    CHECK(g.bias.norm() == 0.0);
    CHECK(g.gamma_log == 0.0);
    CHECK(g.alpha_log == 0.0);
}

TEST_CASE("dml_backward: coincident LEVs give zero gradient through the distance") {
    auto p = DmlParams::zeros(2, 2);
    p.weight << 0.3, -0.2, 0.1, 0.4;
    const Vec x = Vec::Ones(2) * 0.5;
    const auto c = pair_forward(x, x, p);
    REQUIRE(c.dist == 0.0);
    auto g = p.zeros_like();
    Vec gx1(2), gx2(2);
    dml_backward(c, p, 1, 0.91, 0.09, 1.0, g, &gx1, &gx2);
    CHECK(g.weight.norm() == 0.0);
    CHECK(gx1.norm() == 0.0);
    CHECK(gx2.norm() == 0.0);
}

TEST_CASE("dml_backward: matches central finite differences") {
    Rng rng(17);
    double worst = 0.0;
    const double tau_s = 0.91, tau_d = 0.09;
    for (int c = 0; c < 200; ++c) {
        const int d_emb = rng.uniform_int(1, 8);
        const int d_lev = rng.uniform_int(1, 8);
        const int a = rng.uniform_int(0, 1);
        auto p = DmlParams::init(d_lev, d_emb, rng, 0.6);
        p.bias = Vec::NullaryExpr(d_lev, [&] { return rng.gaussian(0.0, 0.3); });
        p.gamma_log = rng.uniform(-0.3, 0.5);
        p.alpha_log = rng.uniform(0.0, 0.4);
        const Vec x1 = Vec::NullaryExpr(d_emb, [&] { return rng.gaussian(0.0, 1.0); });
        const Vec x2 = Vec::NullaryExpr(d_emb, [&] { return rng.gaussian(0.0, 1.0); });

        const auto fwd = [&] {
            return dml_loss(pair_forward(x1, x2, p).p, a, tau_s, tau_d);
        };
        {
            // Skip instances sitting on the hinge kink.
            const double prob = pair_forward(x1, x2, p).p;
            if (std::abs(prob - (a ? tau_s : tau_d)) < 1e-3) {
                --c;
                continue;
            }
        }

        auto g = p.zeros_like();
        dml_backward(pair_forward(x1, x2, p), p, a, tau_s, tau_d, 1.0, g);

        const std::size_t n = optim::param_count(p);
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 1e-5;
            optim::add_to_entry(p, i, h);
            const double up = fwd();
            optim::add_to_entry(p, i, -2 * h);
            const double dn = fwd();
            optim::add_to_entry(p, i, h);
            const double num = (up - dn) / (2 * h);
            const double ana = optim::get_entry(g, i);
            worst = std::max(worst,
                             std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    CHECK(worst < 1e-4);
}
