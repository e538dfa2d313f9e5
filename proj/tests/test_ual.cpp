#include <doctest.h>

#include <cmath>

#include "av/optim.hpp"
#include "av/ual.hpp"

using namespace av;
using namespace av::ual;

namespace {

UalParams random_params(int d_ual, int d_lev, Rng& rng) {
    auto p = UalParams::init(d_ual, d_lev, rng, 0.5);
    p.fuse_bias = Vec::NullaryExpr(d_ual, [&] { return rng.gaussian(0.0, 0.3); });
    p.cm_bias = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.3); });
    return p;
}

}  // namespace

TEST_CASE("fuse: coincident LEVs reduce to tanh of the bias") {
    Rng rng(3);
    auto p = random_params(3, 4, rng);
    const Vec y = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.5); });
    const Vec out = fuse(y, y, p);
    const Vec expect = p.fuse_bias.array().tanh().matrix();
    CHECK((out - expect).norm() == 0.0);
}

TEST_CASE("fuse: swap invariance and scalar fixture") {
    Rng rng(5);
    auto p = random_params(4, 4, rng);
    const Vec y1 = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.5); });
    const Vec y2 = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.5); });
    CHECK((fuse(y1, y2, p) - fuse(y2, y1, p)).norm() == 0.0);

    auto q = UalParams::zeros(1, 1);
    q.fuse_weight(0, 0) = 1.0;
    Vec a(1), b(1);
    a << 1.0;
    b << 0.0;
    CHECK(fuse(a, b, q)[0] == doctest::Approx(std::tanh(1.0)));
}

TEST_CASE("confusion: zero parameters give the uniform matrix") {
    auto p = UalParams::zeros(2, 2);
    const auto cm = confusion(Vec::Zero(2), p);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) CHECK(cm.p(i, j) == doctest::Approx(0.5));
    }
}

TEST_CASE("confusion: softmax fixture (ln 9 vs 0)") {
    auto p = UalParams::zeros(2, 2);
    p.cm_bias[0] = std::log(9.0);  // row i=0 logits (ln 9, 0)
    const auto cm = confusion(Vec::Zero(2), p);
    CHECK(cm.p(0, 0) == doctest::Approx(0.9));
    CHECK(cm.p(0, 1) == doctest::Approx(0.1));
}

TEST_CASE("confusion: rows normalize and entries stay inside (0,1)") {
    Rng rng(7);
    auto p = random_params(3, 3, rng);
    for (int k = 0; k < 50; ++k) {
        const Vec fused = Vec::NullaryExpr(3, [&] { return rng.gaussian(0.0, 1.0); });
        const auto cm = confusion(fused, p);
        for (int i = 0; i < 2; ++i) {
            CHECK(cm.p(i, 0) + cm.p(i, 1) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(cm.p(i, 0) > 0.0);
            CHECK(cm.p(i, 0) < 1.0);
        }
    }
}

TEST_CASE("ual_posterior: identity, uniform and worked fixtures") {
    Confusion identity;
    identity.p << 1.0, 0.0, 0.0, 1.0;
    const auto same = ual_posterior(identity, 0.73);
    CHECK(same[1] == doctest::Approx(0.73).epsilon(1e-15));

    Confusion uniform;
    uniform.p << 0.5, 0.5, 0.5, 0.5;
    for (double pb : {0.1, 0.5, 0.95}) {
        CHECK(ual_posterior(uniform, pb)[1] == doctest::Approx(0.5));
    }

    Confusion cm;
    cm.p << 0.9, 0.1, 0.2, 0.8;  // p(H1|H0-hat) = 0.1, p(H1|H1-hat) = 0.8
    CHECK(ual_posterior(cm, 0.7)[1] == doctest::Approx(0.59).epsilon(1e-15));
}

TEST_CASE("ual_posterior: always a distribution") {
    Rng rng(11);
    auto p = random_params(4, 4, rng);
    for (int k = 0; k < 10000; ++k) {
        const Vec y1 = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.7); });
        const Vec y2 = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.7); });
        const auto uc = forward(y1, y2, rng.uniform(), p);
        CHECK(std::abs(uc.p_ual[0] + uc.p_ual[1] - 1.0) < 1e-12);
    }
}

TEST_CASE("ual_loss: fixtures and regularizer bounds") {
    Confusion cm;
    cm.p << 0.9, 0.1, 0.2, 0.8;
    Eigen::Vector2d p_ual;
    p_ual << 0.41, 0.59;
    CHECK(ual_loss(p_ual, cm, 1, 0.0) == doctest::Approx(-std::log(0.59)).epsilon(1e-12));

    Confusion uniform;
    uniform.p << 0.5, 0.5, 0.5, 0.5;
    Eigen::Vector2d half;
    half << 0.5, 0.5;
    const double reg = ual_loss(half, uniform, 1, 1.0) - ual_loss(half, uniform, 1, 0.0);
    CHECK(reg == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));

    // Per-row entropy lives in (0, ln 2], so the penalty term is in [-2 ln 2, 0).
    Rng rng(13);
    auto p = random_params(3, 3, rng);
    for (int k = 0; k < 200; ++k) {
        const auto cm_k =
            confusion(Vec::NullaryExpr(3, [&] { return rng.gaussian(0.0, 2.0); }), p);
        const double r = ual_loss(half, cm_k, 0, 1.0) - ual_loss(half, cm_k, 0, 0.0);
        CHECK(r >= -2.0 * std::log(2.0) - 1e-12);
        CHECK(r < 0.0);
    }
}

TEST_CASE("identity confusion recovers the scoring posterior exactly") {
    // Saturate the row softmaxes toward the identity and check convergence.
    auto p = UalParams::zeros(1, 1);
    p.cm_bias << 50.0, 0.0, 0.0, 50.0;
    const auto cm = confusion(Vec::Zero(1), p);
    for (double pb : {0.2, 0.5, 0.77}) {
        CHECK(ual_posterior(cm, pb)[1] == doctest::Approx(pb).epsilon(1e-12));
    }
}

TEST_CASE("ual swap invariance end to end") {
    Rng rng(17);
    auto p = random_params(5, 6, rng);
    const Vec y1 = Vec::NullaryExpr(6, [&] { return rng.gaussian(0.0, 0.6); });
    const Vec y2 = Vec::NullaryExpr(6, [&] { return rng.gaussian(0.0, 0.6); });
    const auto a = forward(y1, y2, 0.61, p);
    const auto b = forward(y2, y1, 0.61, p);
    CHECK(a.p_ual[1] == b.p_ual[1]);
    CHECK((a.fused - b.fused).norm() == 0.0);
}

TEST_CASE("ual_backward: matches central finite differences") {
    Rng rng(19);
    double worst = 0.0;
    for (int c = 0; c < 200; ++c) {
        const int d_lev = rng.uniform_int(1, 8);
        const int d_ual = rng.uniform_int(1, 8);
        const int true_j = rng.uniform_int(0, 1);
        auto p = random_params(d_ual, d_lev, rng);
        p.beta = rng.uniform(0.0, 0.3);
        const Vec y1 = Vec::NullaryExpr(d_lev, [&] { return rng.gaussian(0.0, 0.6); });
        const Vec y2 = Vec::NullaryExpr(d_lev, [&] { return rng.gaussian(0.0, 0.6); });
        const double p_bfs = rng.uniform(0.05, 0.95);

        const auto fwd = [&] {
            const auto uc = forward(y1, y2, p_bfs, p);
            return ual_loss(uc.p_ual, uc.cm, true_j, p.beta);
        };

        auto g = p.zeros_like();
        ual_backward(forward(y1, y2, p_bfs, p), p, true_j, 1.0, g);

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

TEST_CASE("ual_backward: regularizer gradient scales linearly with beta") {
    Rng rng(23);
    auto p = random_params(3, 3, rng);
    const Vec y1 = Vec::NullaryExpr(3, [&] { return rng.gaussian(0.0, 0.6); });
    const Vec y2 = Vec::NullaryExpr(3, [&] { return rng.gaussian(0.0, 0.6); });
    const auto uc = forward(y1, y2, 0.7, p);

    const auto grad_at = [&](double beta) {
        auto q = p;
        q.beta = beta;
        auto g = q.zeros_like();
        ual_backward(uc, q, 1, 1.0, g);
        return g;
    };

    const auto g0 = grad_at(0.0);
    const auto g1 = grad_at(1.0);
    const auto g2 = grad_at(2.0);
    // g(beta) = g_nll + beta * g_reg, so g2 - g1 == g1 - g0.
    const std::size_t n = optim::param_count(p);
    for (std::size_t i = 0; i < n; ++i) {
        const double d21 = optim::get_entry(g2, i) - optim::get_entry(g1, i);
        const double d10 = optim::get_entry(g1, i) - optim::get_entry(g0, i);
        CHECK(d21 == doctest::Approx(d10).epsilon(1e-9));
    }
}
