#include <doctest.h>

#include <cmath>

#include "av/metrics.hpp"
#include "av/rng.hpp"
#include "oracles.hpp"

using namespace av;
using namespace av::metrics;

namespace {

AnswerSet make(const std::vector<std::pair<double, int>>& rows) {
    AnswerSet out;
    int k = 0;
    for (const auto& [v, a] : rows) out.push_back({"t" + std::to_string(k++), v, a});
    return out;
}

AnswerSet random_answers(av::Rng& rng, int n, double nonresponse_rate = 0.1) {
    AnswerSet out;
    for (int i = 0; i < n; ++i) {
        const int truth = rng.uniform_int(0, 1);
        double value;
        if (rng.uniform() < nonresponse_rate) {
            value = 0.5;
        } else if (rng.uniform() < 0.2) {
            // Coarse grid creates exact ties; nudged off bin edges and 0.5.
            value = std::round(rng.uniform() * 10.0) / 10.0;
            value += value <= 0.5 ? 0.013 : -0.013;
        } else {
            value = clamp_prob(0.35 + 0.3 * truth + rng.gaussian(0.0, 0.25));
        }
        out.push_back({"r" + std::to_string(i), value, truth});
    }
    return out;
}

}  // namespace

TEST_CASE("auc: fixtures") {
    CHECK(auc(make({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}})) == doctest::Approx(1.0));
    CHECK(auc(make({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}})) == doctest::Approx(0.5));
    CHECK(auc(make({{0.9, 1}, {0.4, 1}, {0.6, 0}, {0.1, 0}})) == doctest::Approx(0.75));
    CHECK_THROWS_AS(auc(make({{0.9, 1}, {0.8, 1}})), SingleClass);
}

TEST_CASE("auc: agrees with the pairwise comparator exactly") {
    av::Rng rng(101);
    for (int rep = 0; rep < 5; ++rep) {
        const auto answers = random_answers(rng, 1000);
        CHECK(std::abs(auc(answers) - oracle::auc_pairwise(answers)) <= 1e-12);
    }
}

TEST_CASE("c_at_1: fixtures") {
    // 8 correct answers out of 10, no abstentions: plain accuracy.
    AnswerSet ten;
    for (int i = 0; i < 8; ++i) ten.push_back({"c" + std::to_string(i), 0.9, 1});
    ten.push_back({"w1", 0.9, 0});
    ten.push_back({"w2", 0.1, 1});
    CHECK(c_at_1(ten) == doctest::Approx(0.8));

    // 7 correct, 2 non-responses, 10 trials: (7 + 2 * 0.7) / 10.
    AnswerSet mixed;
    for (int i = 0; i < 7; ++i) mixed.push_back({"c" + std::to_string(i), 0.9, 1});
    mixed.push_back({"w", 0.2, 1});
    mixed.push_back({"u1", 0.5, 0});
    mixed.push_back({"u2", 0.5, 1});
    CHECK(c_at_1(mixed) == doctest::Approx(0.84));

    AnswerSet silent = make({{0.5, 1}, {0.5, 0}, {0.5, 1}});
    CHECK(c_at_1(silent) == 0.0);
}

TEST_CASE("f_05_u: fixtures") {
    CHECK(f_05_u(make({{0.9, 1}, {0.8, 1}, {0.1, 0}})) == doctest::Approx(1.0));

    // TP=4, FP=1, answered FN=1, one unanswered positive: P=0.8, R=2/3.
    AnswerSet s;
    for (int i = 0; i < 4; ++i) s.push_back({"tp" + std::to_string(i), 0.9, 1});
    s.push_back({"fp", 0.9, 0});
    s.push_back({"fn", 0.1, 1});
    s.push_back({"u", 0.5, 1});
    CHECK(f_05_u(s) == doctest::Approx(10.0 / 13.0).epsilon(1e-12));

    AnswerSet all_unanswered = make({{0.5, 1}, {0.5, 1}, {0.1, 0}});
    CHECK(f_05_u(all_unanswered) == 0.0);
    CHECK_THROWS_AS(f_05_u(make({{0.9, 0}, {0.1, 0}})), NoPositives);
}

TEST_CASE("f1: fixtures") {
    CHECK(f1(make({{0.9, 1}, {0.1, 0}})) == doctest::Approx(1.0));
    // TP=3, FP=1, FN=1.
    AnswerSet s;
    for (int i = 0; i < 3; ++i) s.push_back({"tp" + std::to_string(i), 0.9, 1});
    s.push_back({"fp", 0.9, 0});
    s.push_back({"fn", 0.1, 1});
    CHECK(f1(s) == doctest::Approx(0.75));
    CHECK(f1(make({{0.1, 1}, {0.2, 1}, {0.9, 0}})) == 0.0);
}

TEST_CASE("brier_complement: fixtures") {
    CHECK(brier_complement(make({{1.0, 1}, {0.0, 0}})) == doctest::Approx(1.0));
    CHECK(brier_complement(make({{0.5, 1}, {0.5, 0}})) == doctest::Approx(0.75));
    CHECK(brier_complement(make({{0.0, 1}, {1.0, 0}})) == doctest::Approx(0.0));
}

TEST_CASE("overall: arithmetic mean of the five metrics") {
    CHECK(overall(1, 1, 1, 1, 1) == doctest::Approx(1.0));
    CHECK(overall(0.9, 0.9, 0.9, 0.9, 0.9) == doctest::Approx(0.9));
    // Published single-model evaluation row reproduces its overall column.
    const double o = overall(0.983, 0.926, 0.946, 0.921, 0.927);
    CHECK(o == doctest::Approx(0.9406).epsilon(1e-12));
    CHECK(std::abs(100.0 * o - 94.0) < 0.1);
}

TEST_CASE("reliability: fixtures") {
    // Single populated bin with conf 0.9 and acc 0.8.
    AnswerSet s;
    for (int i = 0; i < 8; ++i) s.push_back({"a" + std::to_string(i), 0.9, 1});
    s.push_back({"b0", 0.9, 0});
    s.push_back({"b1", 0.9, 0});
    const auto r = reliability(s, 10);
    CHECK(r.ece == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.mce == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.acc == doctest::Approx(0.8));
    CHECK(r.conf == doctest::Approx(0.9));
}

TEST_CASE("reliability: weighted two-bin fixture") {
    AnswerSet s;
    // 50 trials at conf 0.92, 45 correct: gap 0.02.
    for (int i = 0; i < 45; ++i) s.push_back({"x" + std::to_string(i), 0.92, 1});
    for (int i = 0; i < 5; ++i) s.push_back({"y" + std::to_string(i), 0.92, 0});
    // 50 trials at conf 0.60, 25 correct: gap 0.10.
    for (int i = 0; i < 25; ++i) s.push_back({"p" + std::to_string(i), 0.60, 1});
    for (int i = 0; i < 25; ++i) s.push_back({"q" + std::to_string(i), 0.60, 0});
    const auto r = reliability(s, 10);
    CHECK(r.ece == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(r.mce == doctest::Approx(0.10).epsilon(1e-12));
}

TEST_CASE("reliability: perfectly calibrated bins give zero errors") {
    AnswerSet s;
    // conf 0.75 with exactly 3 of 4 correct, repeated.
    for (int g = 0; g < 5; ++g) {
        for (int i = 0; i < 3; ++i) s.push_back({"g" + std::to_string(g) + "c" + std::to_string(i), 0.75, 1});
        s.push_back({"g" + std::to_string(g) + "w", 0.75, 0});
    }
    const auto r = reliability(s, 10);
    CHECK(r.ece == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.mce == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metrics agree with naive reimplementations on random sets") {
    av::Rng rng(211);
    for (int rep = 0; rep < 5; ++rep) {
        const auto answers = random_answers(rng, 1000);
        CHECK(std::abs(c_at_1(answers) - oracle::c_at_1_naive(answers)) <= 1e-12);
        CHECK(std::abs(f1(answers) - oracle::f1_naive(answers)) <= 1e-12);
        CHECK(std::abs(f_05_u(answers) - oracle::f_05_u_naive(answers)) <= 1e-12);
        CHECK(std::abs(brier_complement(answers) - oracle::brier_complement_naive(answers)) <=
              1e-12);
        const auto got = reliability(answers, 10);
        const auto want = oracle::calibration_naive(answers, 10);
        CHECK(std::abs(got.ece - want.ece) <= 1e-12);
        CHECK(std::abs(got.mce - want.mce) <= 1e-12);
        CHECK(std::abs(got.acc - want.acc) <= 1e-12);
        CHECK(std::abs(got.conf - want.conf) <= 1e-12);
    }
}

TEST_CASE("c_at_1 equals accuracy without non-responses") {
    av::Rng rng(223);
    const auto answers = random_answers(rng, 400, 0.0);
    double correct = 0.0;
    for (const auto& t : answers) {
        if ((t.value > 0.5) == (t.truth == 1) && t.value != 0.5) correct += 1.0;
    }
    CHECK(c_at_1(answers) == doctest::Approx(correct / 400.0).epsilon(1e-12));
}

TEST_CASE("f_05_u never improves when positives go unanswered") {
    av::Rng rng(227);
    auto answers = random_answers(rng, 300, 0.0);
    double prev = f_05_u(answers);
    for (auto& t : answers) {
        if (t.truth == 1 && t.value > 0.5) {
            t.value = 0.5;
            const double cur = f_05_u(answers);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}
