#pragma once

#include <tuple>

#include "av/rng.hpp"
#include "av/types.hpp"

namespace av::bfs {

// Two-covariance scoring head. The generative model per reduced LEV is
// y = s + n with s ~ N(mu, B^-1) and n ~ N(0, W^-1); W and B are precision
// matrices kept positive definite by storing lower-triangular Cholesky
// factors whose diagonals pass through softplus.
struct BfsParams {
    Mat reduce_weight;  // D_bfs x D_lev
    Vec reduce_bias;    // D_bfs
    Vec mu;             // D_bfs
    Mat w_chol_raw;     // D_bfs x D_bfs, lower triangle used
    Mat b_chol_raw;     // D_bfs x D_bfs, lower triangle used

    Mat within_chol() const;   // L_W with softplus diagonal
    Mat between_chol() const;  // L_B
    Mat within_prec() const;   // W = L_W L_W^T
    Mat between_prec() const;  // B = L_B L_B^T

    static BfsParams init(int d_bfs, int d_lev, Rng& rng, double scale = 0.1);
    static BfsParams zeros(int d_bfs, int d_lev);
    BfsParams zeros_like() const {
        return zeros(static_cast<int>(reduce_weight.rows()),
                     static_cast<int>(reduce_weight.cols()));
    }

    static constexpr auto fields() {
        return std::make_tuple(&BfsParams::reduce_weight, &BfsParams::reduce_bias,
                               &BfsParams::mu, &BfsParams::w_chol_raw,
                               &BfsParams::b_chol_raw);
    }
};

// Effective Cholesky factor from raw storage: strict lower triangle copied,
// diagonal mapped through softplus.
Mat chol_factor_from_raw(const Mat& raw);

// yr = tanh(W_red y + b_red)
Vec reduce(const Vec& y, const BfsParams& p);

struct LogLiks {
    double h1 = 0.0;  // log p(y1, y2 | same source)
    double h0 = 0.0;  // log p(y1, y2 | independent sources)
};

// Closed-form joint log-likelihoods under the two-covariance model, given
// explicit precision matrices. All determinants and solves run through
// Cholesky factorizations; nothing is inverted on this path.
LogLiks two_cov_log_likelihoods(const Vec& y1r, const Vec& y2r, const Vec& mu,
                                const Mat& w_prec, const Mat& b_prec);

LogLiks log_likelihoods(const Vec& y1r, const Vec& y2r, const BfsParams& p);

double bfs_posterior(double llr);

// Binary cross entropy on the clamped posterior.
double bfs_loss(double posterior, int a);

struct TrialScore {
    double llr = 0.0;
    double posterior_h1 = 0.5;
};

// Everything the backward pass needs, captured during scoring.
struct ScoreCache {
    Vec y1, y2;    // input LEVs
    Vec y1r, y2r;  // reduced LEVs
    Vec c1, c2;    // y_ir - mu
    Vec ubar, v;   // rotated coordinates (sum/diff over sqrt 2), ubar centered
    Mat w_prec, b_prec;
    Eigen::LLT<Mat> llt_m;   // chol(W + B)
    Eigen::LLT<Mat> llt_m2;  // chol(2W + B)
    Vec r1, t1, r2, t2, ru, tu;
    LogLiks liks;
    TrialScore score;
};

ScoreCache score_forward(const Vec& y1, const Vec& y2, const BfsParams& p);

// Backpropagates d(loss)/d(llr) into phi; LEV gradients are exposed for
// diagnostics only (training stops gradients at the LEVs).
void bfs_backward(const ScoreCache& c, const BfsParams& p, double upstream_llr,
                  BfsParams& grads, Vec* grad_y1 = nullptr, Vec* grad_y2 = nullptr);

}  // namespace av::bfs
