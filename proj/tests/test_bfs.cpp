#include <doctest.h>

#include <cmath>

#include "av/bfs.hpp"
#include "av/optim.hpp"
#include "oracles.hpp"

using namespace av;
using namespace av::bfs;

namespace {

// Covariance-space joint Gaussian log-density; the implementation under test
// works in precision space, so this is an independent route.
double logpdf_cov(const Vec& z, const Vec& mean, const Mat& cov) {
    const Eigen::LLT<Mat> llt(cov);
    REQUIRE(llt.info() == Eigen::Success);
    const Vec d = z - mean;
    const double quad = d.dot(llt.solve(d));
    const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(z.size()) * std::log(2.0 * M_PI) + logdet + quad);
}

LogLiks joint_gaussian_oracle(const Vec& y1, const Vec& y2, const Vec& mu,
                              const Mat& w_prec, const Mat& b_prec) {
    const Eigen::Index d = y1.size();
    const Mat w_cov = w_prec.inverse();
    const Mat b_cov = b_prec.inverse();
    const Mat total = w_cov + b_cov;

    Vec z(2 * d), mean(2 * d);
    z << y1, y2;
    mean << mu, mu;

    Mat cov_h1(2 * d, 2 * d);
    cov_h1.topLeftCorner(d, d) = total;
    cov_h1.bottomRightCorner(d, d) = total;
    cov_h1.topRightCorner(d, d) = b_cov;
    cov_h1.bottomLeftCorner(d, d) = b_cov;

    Mat cov_h0 = Mat::Zero(2 * d, 2 * d);
    cov_h0.topLeftCorner(d, d) = total;
    cov_h0.bottomRightCorner(d, d) = total;

    LogLiks out;
    out.h1 = logpdf_cov(z, mean, cov_h1);
    out.h0 = logpdf_cov(z, mean, cov_h0);
    return out;
}

BfsParams random_params(int d_bfs, int d_lev, Rng& rng) {
    auto p = BfsParams::init(d_bfs, d_lev, rng, 0.5);
    p.mu = Vec::NullaryExpr(d_bfs, [&] { return rng.gaussian(0.0, 0.4); });
    for (int i = 0; i < d_bfs; ++i) {
        for (int j = 0; j <= i; ++j) {
            p.w_chol_raw(i, j) += rng.gaussian(0.0, 0.25);
            p.b_chol_raw(i, j) += rng.gaussian(0.0, 0.25);
        }
    }
    return p;
}

}  // namespace

TEST_CASE("reduce: fixtures and range") {
    auto p = BfsParams::zeros(2, 3);
    CHECK(reduce(Vec::Ones(3), p).norm() == 0.0);

    auto q = BfsParams::zeros(1, 1);
    q.reduce_weight(0, 0) = 2.0;
    Vec y(1);
    y << 0.25;
    CHECK(reduce(y, q)[0] == doctest::Approx(std::tanh(0.5)));

    Rng rng(1);
    auto r = random_params(4, 6, rng);
    for (int k = 0; k < 20; ++k) {
        const Vec lev = Vec::NullaryExpr(6, [&] { return rng.gaussian(0.0, 2.0); });
        CHECK(reduce(lev, r).array().abs().maxCoeff() < 1.0);
    }
}

TEST_CASE("log_likelihoods: scalar worked examples") {
    const Mat one = Mat::Ones(1, 1);
    const Vec zero = Vec::Zero(1);

    Vec y1(1), y2(1);
    y1 << 0.0;
    y2 << 0.0;
    auto liks = two_cov_log_likelihoods(y1, y2, zero, one, one);
    CHECK(liks.h1 - liks.h0 == doctest::Approx(0.5 * std::log(4.0 / 3.0)).epsilon(1e-9));

    y1 << 2.0;
    y2 << -2.0;
    liks = two_cov_log_likelihoods(y1, y2, zero, one, one);
    CHECK(liks.h1 - liks.h0 ==
          doctest::Approx(0.5 * std::log(4.0 / 3.0) - 2.0).epsilon(1e-9));
}

TEST_CASE("log_likelihoods: swapping the pair changes nothing") {
    Rng rng(23);
    for (int c = 0; c < 20; ++c) {
        const int d = rng.uniform_int(1, 4);
        auto p = random_params(d, d, rng);
        const Mat w = p.within_prec();
        const Mat b = p.between_prec();
        const Vec y1 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.8); });
        const Vec y2 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.8); });
        const auto fwd = two_cov_log_likelihoods(y1, y2, p.mu, w, b);
        const auto rev = two_cov_log_likelihoods(y2, y1, p.mu, w, b);
        CHECK(fwd.h1 == doctest::Approx(rev.h1).epsilon(1e-14));
        CHECK(fwd.h0 == doctest::Approx(rev.h0).epsilon(1e-14));
    }
}

TEST_CASE("log_likelihoods: matches the joint-Gaussian density oracle") {
    Rng rng(29);
    for (int c = 0; c < 50; ++c) {
        const int d = rng.uniform_int(1, 3);
        auto p = random_params(d, d, rng);
        const Mat w = p.within_prec();
        const Mat b = p.between_prec();
        const Vec y1 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.8); });
        const Vec y2 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.8); });
        const auto got = two_cov_log_likelihoods(y1, y2, p.mu, w, b);
        const auto want = joint_gaussian_oracle(y1, y2, p.mu, w, b);
        CHECK(got.h1 == doctest::Approx(want.h1).epsilon(1e-10));
        CHECK(got.h0 == doctest::Approx(want.h0).epsilon(1e-10));
    }
}

TEST_CASE("log_likelihoods: Monte-Carlo integration over the latent style") {
    // p(y1, y2 | shared s) = E_{s ~ N(mu, B^-1)} [ N(y1; s, W^-1) N(y2; s, W^-1) ]
    Rng rng(31);
    for (int rep = 0; rep < 2; ++rep) {
        const int d = rep + 1;
        auto p = random_params(d, d, rng);
        const Mat w = p.within_prec();
        const Mat b = p.between_prec();
        const Vec y1 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.6); });
        const Vec y2 = Vec::NullaryExpr(d, [&] { return rng.gaussian(0.0, 0.6); });

        const Mat w_cov = w.inverse();
        const Mat l_b = p.between_chol();
        const auto solve_lt = [&](Vec zv) {
            return Vec(l_b.transpose().triangularView<Eigen::Upper>().solve(zv));
        };

        const int n_samples = 1000000;
        double acc = 0.0;
        for (int s = 0; s < n_samples; ++s) {
            const Vec z = Vec::NullaryExpr(d, [&] { return rng.gaussian(); });
            const Vec style = p.mu + solve_lt(z);
            acc += std::exp(logpdf_cov(y1, style, w_cov) + logpdf_cov(y2, style, w_cov));
        }
        const double mc = acc / n_samples;
        const auto got = two_cov_log_likelihoods(y1, y2, p.mu, w, b);
        CHECK(std::exp(got.h1) == doctest::Approx(mc).epsilon(0.01));
    }
}

TEST_CASE("bfs_posterior: sigmoid identities") {
    CHECK(bfs_posterior(0.0) == doctest::Approx(0.5));
    CHECK(bfs_posterior(40.0) == doctest::Approx(1.0));
    CHECK(bfs_posterior(0.5 * std::log(4.0 / 3.0)) == doctest::Approx(0.5359).epsilon(1e-3));
}

TEST_CASE("posterior equals sigmoid of the score identically") {
    Rng rng(37);
    auto p = random_params(3, 5, rng);
    for (int k = 0; k < 30; ++k) {
        const Vec y1 = Vec::NullaryExpr(5, [&] { return rng.gaussian(0.0, 0.7); });
        const Vec y2 = Vec::NullaryExpr(5, [&] { return rng.gaussian(0.0, 0.7); });
        const auto c = score_forward(y1, y2, p);
        CHECK(c.score.posterior_h1 == sigmoid(c.score.llr));
    }
}

TEST_CASE("bfs_loss: fixtures") {
    CHECK(bfs_loss(1.0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bfs_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
    CHECK(bfs_loss(0.9, 0) == doctest::Approx(-std::log(0.1)));
}

TEST_CASE("bfs gradient of llr w.r.t. mu vanishes at the symmetric point") {
    Rng rng(41);
    auto p = random_params(3, 4, rng);
    // Choose LEVs whose reductions coincide with mu: y1 = y2 and mu = reduce(y).
    const Vec y = Vec::NullaryExpr(4, [&] { return rng.gaussian(0.0, 0.5); });
    p.mu = reduce(y, p);
    const auto c = score_forward(y, y, p);
    auto g = p.zeros_like();
    bfs_backward(c, p, 1.0, g);
    CHECK(g.mu.norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bfs scalar d llr / d y1r matches the hand derivation") {
    // W = B = 1, mu = 0: llr(y1, y2) = const - 0.5 [ (y1+y2)^2/6 +
    // (y1-y2)^2/2 - y1^2/2 - y2^2/2 ], so d llr/d y1 = -0.5 [ (y1+y2)/3 - y2 ].
    const Mat one = Mat::Ones(1, 1);
    const Vec zero = Vec::Zero(1);
    const auto hand = [](double y1, double y2) { return -0.5 * ((y1 + y2) / 3.0 - y2); };

    const double h = 1e-6;
    for (const auto [a, b] : std::vector<std::pair<double, double>>{{2.0, -2.0}, {0.3, 0.9}}) {
        Vec y1(1), y2(1);
        y2 << b;
        y1 << a + h;
        const auto up = two_cov_log_likelihoods(y1, y2, zero, one, one);
        y1 << a - h;
        const auto dn = two_cov_log_likelihoods(y1, y2, zero, one, one);
        const double numeric = ((up.h1 - up.h0) - (dn.h1 - dn.h0)) / (2 * h);
        CHECK(numeric == doctest::Approx(hand(a, b)).epsilon(1e-5));
    }
}

TEST_CASE("bfs_backward: matches central finite differences") {
    Rng rng(43);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        const int d_lev = rng.uniform_int(1, 8);
        const int d_bfs = rng.uniform_int(1, 3);
        const int a = rng.uniform_int(0, 1);
        auto p = random_params(d_bfs, d_lev, rng);
        const Vec y1 = Vec::NullaryExpr(d_lev, [&] { return rng.gaussian(0.0, 0.6); });
        const Vec y2 = Vec::NullaryExpr(d_lev, [&] { return rng.gaussian(0.0, 0.6); });

        const auto fwd = [&] {
            return bfs_loss(score_forward(y1, y2, p).score.posterior_h1, a);
        };

        auto g = p.zeros_like();
        const auto cache = score_forward(y1, y2, p);
        bfs_backward(cache, p, cache.score.posterior_h1 - a, g);

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

TEST_CASE("cholesky parameterization keeps precisions positive definite") {
    Rng rng(47);
    auto p = random_params(4, 4, rng);
    // Arbitrary raw-space steps cannot leave the SPD cone.
    for (int step = 0; step < 50; ++step) {
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j <= i; ++j) {
                p.w_chol_raw(i, j) += rng.gaussian(0.0, 0.5);
                p.b_chol_raw(i, j) += rng.gaussian(0.0, 0.5);
            }
        }
        const Eigen::LLT<Mat> lw(p.within_prec());
        const Eigen::LLT<Mat> lb(p.between_prec());
        CHECK(lw.info() == Eigen::Success);
        CHECK(lb.info() == Eigen::Success);
    }
}

TEST_CASE("log_likelihoods: rejects indefinite precision input") {
    Vec y(1), mu(1);
    y << 0.1;
    mu << 0.0;
    Mat bad = -Mat::Ones(1, 1);
    CHECK_THROWS_AS(two_cov_log_likelihoods(y, y, mu, bad, Mat::Ones(1, 1)),
                    NotPositiveDefinite);
}
