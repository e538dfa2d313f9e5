#pragma once

#include <tuple>

#include "av/rng.hpp"
#include "av/types.hpp"

namespace av::ual {

// Input-dependent 2x2 confusion matrix that re-calibrates the scoring
// posterior. Rows are indexed by the assigned hypothesis i, columns by the
// true hypothesis j; each row is softmax-normalized over j so the adapted
// posterior stays a distribution.
struct Confusion {
    Eigen::Matrix2d p;  // p(i, j) = p(H_j | assigned H_i)
};

struct UalParams {
    Mat fuse_weight;  // D_ual x D_lev
    Vec fuse_bias;    // D_ual
    Mat cm_weight;    // 4 x D_ual, row k = 2*i + j
    Vec cm_bias;      // 4
    double beta = 0.1;  // entropy-regularizer weight, not trained

    static UalParams init(int d_ual, int d_lev, Rng& rng, double scale = 0.1);
    static UalParams zeros(int d_ual, int d_lev);
    UalParams zeros_like() const {
        UalParams z = zeros(static_cast<int>(fuse_weight.rows()),
                            static_cast<int>(fuse_weight.cols()));
        z.beta = beta;
        return z;
    }

    static constexpr auto fields() {
        return std::make_tuple(&UalParams::fuse_weight, &UalParams::fuse_bias,
                               &UalParams::cm_weight, &UalParams::cm_bias);
    }
};

// tanh(W (y1 - y2)^o2 + b); even in the difference, so swap-invariant.
Vec fuse(const Vec& y1, const Vec& y2, const UalParams& p);

Confusion confusion(const Vec& fused, const UalParams& p);

// p_UAL(H_j) = sum_i p(H_j | H_i) p_BFS(H_i); returns (p(H0), p(H1)).
Eigen::Vector2d ual_posterior(const Confusion& cm, double p_bfs_h1);

// Negative log-likelihood of the true hypothesis plus beta * sum p log p
// over the confusion entries (most negative at the uniform matrix).
double ual_loss(const Eigen::Vector2d& p_ual, const Confusion& cm, int true_j,
                double beta);

struct UalCache {
    Vec sq;     // (y1 - y2)^o2
    Vec fused;  // tanh output
    Confusion cm;
    double p_bfs_h1 = 0.5;
    Eigen::Vector2d p_ual;
};

UalCache forward(const Vec& y1, const Vec& y2, double p_bfs_h1, const UalParams& p);

// Gradients w.r.t. lambda only; training stops gradients at the LEVs and at
// the scoring posterior.
void ual_backward(const UalCache& c, const UalParams& p, int true_j,
                  double upstream, UalParams& grads);

}  // namespace av::ual
