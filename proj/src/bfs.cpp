#include "av/bfs.hpp"

#include <cmath>

namespace av::bfs {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
const double kSqrt2 = std::sqrt(2.0);

double logdet_from_llt(const Eigen::LLT<Mat>& llt) {
    return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

Eigen::LLT<Mat> checked_llt(const Mat& m, const char* what) {
    // Eigen's LLT does not reliably flag non-finite input on its own.
    if (!m.allFinite()) {
        throw NotPositiveDefinite(std::string("non-finite entries in ") + what);
    }
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite(std::string("Cholesky factorization failed for ") + what);
    }
    return llt;
}

}  // namespace

Mat chol_factor_from_raw(const Mat& raw) {
    const Eigen::Index d = raw.rows();
    Mat l = raw.template triangularView<Eigen::StrictlyLower>();
    for (Eigen::Index k = 0; k < d; ++k) l(k, k) = softplus(raw(k, k));
    return l;
}

Mat BfsParams::within_chol() const { return chol_factor_from_raw(w_chol_raw); }
Mat BfsParams::between_chol() const { return chol_factor_from_raw(b_chol_raw); }
Mat BfsParams::within_prec() const {
    const Mat l = within_chol();
    return l * l.transpose();
}
Mat BfsParams::between_prec() const {
    const Mat l = between_chol();
    return l * l.transpose();
}

BfsParams BfsParams::init(int d_bfs, int d_lev, Rng& rng, double scale) {
    BfsParams p;
    p.reduce_weight = Mat::NullaryExpr(d_bfs, d_lev, [&] { return rng.gaussian(0.0, scale); });
    p.reduce_bias = Vec::Zero(d_bfs);
    p.mu = Vec::Zero(d_bfs);
    // softplus(raw) = 1 on the diagonal makes W = B = I at initialization.
    const double raw_one = softplus_inverse(1.0);
    p.w_chol_raw = Mat::Zero(d_bfs, d_bfs);
    p.b_chol_raw = Mat::Zero(d_bfs, d_bfs);
    p.w_chol_raw.diagonal().setConstant(raw_one);
    p.b_chol_raw.diagonal().setConstant(raw_one);
    return p;
}

BfsParams BfsParams::zeros(int d_bfs, int d_lev) {
    BfsParams p;
    p.reduce_weight = Mat::Zero(d_bfs, d_lev);
    p.reduce_bias = Vec::Zero(d_bfs);
    p.mu = Vec::Zero(d_bfs);
    p.w_chol_raw = Mat::Zero(d_bfs, d_bfs);
    p.b_chol_raw = Mat::Zero(d_bfs, d_bfs);
    return p;
}

Vec reduce(const Vec& y, const BfsParams& p) {
    require_dims(p.reduce_weight.cols() == y.size() &&
                     p.reduce_weight.rows() == p.reduce_bias.size(),
                 "reduce: parameter/LEV dimensions disagree");
    return tanh_open_vec(p.reduce_weight * y + p.reduce_bias);
}

LogLiks two_cov_log_likelihoods(const Vec& y1r, const Vec& y2r, const Vec& mu,
                                const Mat& w_prec, const Mat& b_prec) {
    require_dims(y1r.size() == y2r.size() && y1r.size() == mu.size() &&
                     w_prec.rows() == y1r.size() && w_prec.cols() == y1r.size() &&
                     b_prec.rows() == y1r.size() && b_prec.cols() == y1r.size(),
                 "two_cov_log_likelihoods: dimensions disagree");

    const double dim = static_cast<double>(y1r.size());
    const auto llt_w = checked_llt(w_prec, "W");
    const auto llt_b = checked_llt(b_prec, "B");
    const auto llt_m = checked_llt(Mat(w_prec + b_prec), "W + B");
    const auto llt_m2 = checked_llt(Mat(2.0 * w_prec + b_prec), "2W + B");

    const double logdet_w = logdet_from_llt(llt_w);
    const double logdet_b = logdet_from_llt(llt_b);
    const double logdet_m = logdet_from_llt(llt_m);
    const double logdet_m2 = logdet_from_llt(llt_m2);

    const Vec c1 = y1r - mu;
    const Vec c2 = y2r - mu;
    // Rotate to independent coordinates: u = (y1+y2)/sqrt2, v = (y1-y2)/sqrt2.
    const Vec ubar = (c1 + c2) / kSqrt2;
    const Vec v = (y1r - y2r) / kSqrt2;

    // Marginal per-document precision (B^-1 + W^-1)^-1 = W (W+B)^-1 B.
    const double q1 = c1.dot(w_prec * llt_m.solve(b_prec * c1));
    const double q2 = c2.dot(w_prec * llt_m.solve(b_prec * c2));
    // Same-source sum-coordinate precision (2B^-1 + W^-1)^-1 = W (2W+B)^-1 B.
    const double qu = ubar.dot(w_prec * llt_m2.solve(b_prec * ubar));
    // Difference coordinate has precision W under the shared-source model.
    const double qv = v.dot(w_prec * v);

    LogLiks out;
    // log det(B^-1 + W^-1) = log det(W+B) - log det W - log det B, etc.
    const double logdet_total = logdet_m - logdet_w - logdet_b;
    const double logdet_sum = logdet_m2 - logdet_w - logdet_b;
    out.h0 = -dim * kLog2Pi - logdet_total - 0.5 * (q1 + q2);
    out.h1 = -dim * kLog2Pi - 0.5 * (logdet_sum - logdet_w) - 0.5 * (qu + qv);
    return out;
}

LogLiks log_likelihoods(const Vec& y1r, const Vec& y2r, const BfsParams& p) {
    return two_cov_log_likelihoods(y1r, y2r, p.mu, p.within_prec(), p.between_prec());
}

double bfs_posterior(double llr) { return sigmoid(llr); }

double bfs_loss(double posterior, int a) {
    const double q = clamp_prob(posterior);
    return a ? -std::log(q) : -std::log(1.0 - q);
}

ScoreCache score_forward(const Vec& y1, const Vec& y2, const BfsParams& p) {
    ScoreCache c;
    c.y1 = y1;
    c.y2 = y2;
    c.y1r = reduce(y1, p);
    c.y2r = reduce(y2, p);
    c.w_prec = p.within_prec();
    c.b_prec = p.between_prec();
    c.llt_m = checked_llt(Mat(c.w_prec + c.b_prec), "W + B");
    c.llt_m2 = checked_llt(Mat(2.0 * c.w_prec + c.b_prec), "2W + B");

    c.c1 = c.y1r - p.mu;
    c.c2 = c.y2r - p.mu;
    c.ubar = (c.c1 + c.c2) / kSqrt2;
    c.v = (c.y1r - c.y2r) / kSqrt2;
    c.r1 = c.llt_m.solve(c.b_prec * c.c1);
    c.t1 = c.llt_m.solve(c.w_prec * c.c1);
    c.r2 = c.llt_m.solve(c.b_prec * c.c2);
    c.t2 = c.llt_m.solve(c.w_prec * c.c2);
    c.ru = c.llt_m2.solve(c.b_prec * c.ubar);
    c.tu = c.llt_m2.solve(c.w_prec * c.ubar);

    c.liks = two_cov_log_likelihoods(c.y1r, c.y2r, p.mu, c.w_prec, c.b_prec);
    c.score.llr = c.liks.h1 - c.liks.h0;
    c.score.posterior_h1 = bfs_posterior(c.score.llr);
    return c;
}

namespace {

// Maps a free-matrix gradient G of f(W), W = L L^T, onto the raw lower
// factor: dL = (G + G^T) L masked lower, diagonal scaled by softplus'.
void fold_into_raw(const Mat& g_free, const Mat& l, const Mat& raw, Mat& grad_raw) {
    Mat gl = (g_free + g_free.transpose()) * l;
    const Eigen::Index d = gl.rows();
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double g = gl(i, j);
            if (i == j) g *= sigmoid(raw(i, i));
            grad_raw(i, j) += g;
        }
    }
}

}  // namespace

void bfs_backward(const ScoreCache& c, const BfsParams& p, double upstream_llr,
                  BfsParams& grads, Vec* grad_y1, Vec* grad_y2) {
    const Eigen::Index d = p.mu.size();
    const Mat identity = Mat::Identity(d, d);
    const Mat m_inv = c.llt_m.solve(identity);
    const Mat m2_inv = c.llt_m2.solve(identity);
    const Mat& w = c.w_prec;
    const Mat& b = c.b_prec;

    // Symmetric quadratic-form pulls: q = c^T W M^{-1} B c has
    // dq/dc = W r + B t with r = M^{-1} B c, t = M^{-1} W c.
    const Vec pull1 = w * c.r1 + b * c.t1;
    const Vec pull2 = w * c.r2 + b * c.t2;
    const Vec pullu = w * c.ru + b * c.tu;
    const Vec wv = w * c.v;

    // llr = logdet(W+B) - 0.5 logdet(2W+B) - 0.5 logdet B
    //       - 0.5 (qu + qv - q1 - q2)
    Mat g_w = m_inv - m2_inv;
    g_w -= 0.5 * (c.ubar * c.ru.transpose() - 2.0 * c.tu * c.ru.transpose());
    g_w -= 0.5 * (c.v * c.v.transpose());
    g_w += 0.5 * (c.c1 * c.r1.transpose() - c.t1 * c.r1.transpose());
    g_w += 0.5 * (c.c2 * c.r2.transpose() - c.t2 * c.r2.transpose());
    g_w *= upstream_llr;

    Mat g_b = m_inv - 0.5 * m2_inv;
    g_b -= 0.5 * (c.tu * c.ubar.transpose() - c.tu * c.ru.transpose());
    g_b += 0.5 * (c.t1 * c.c1.transpose() - c.t1 * c.r1.transpose());
    g_b += 0.5 * (c.t2 * c.c2.transpose() - c.t2 * c.r2.transpose());
    g_b *= upstream_llr;

    const Mat l_w = p.within_chol();
    const Mat l_b = p.between_chol();
    fold_into_raw(g_w, l_w, p.w_chol_raw, grads.w_chol_raw);
    fold_into_raw(g_b, l_b, p.b_chol_raw, grads.b_chol_raw);
    // The -0.5 logdet B term acts on the factor diagonal directly.
    for (Eigen::Index k = 0; k < d; ++k) {
        grads.b_chol_raw(k, k) +=
            upstream_llr * (-1.0 / l_b(k, k)) * sigmoid(p.b_chol_raw(k, k));
    }

    // Quadratic part: llr depends on mu and the reduced LEVs through
    // c_i = y_ir - mu, ubar = (c1 + c2)/sqrt2, v = (y1r - y2r)/sqrt2.
    // d(-0.5 qu)/dmu = (sqrt2/2) pullu since dubar/dmu = -sqrt2 I;
    // d(+0.5 q_i)/dmu = -0.5 pull_i.
    const double inv_sqrt2 = 1.0 / kSqrt2;
    grads.mu += upstream_llr * ((kSqrt2 / 2.0) * pullu - 0.5 * pull1 - 0.5 * pull2);

    const Vec dllr_dy1r =
        upstream_llr * (0.5 * pull1 - 0.5 * inv_sqrt2 * pullu - inv_sqrt2 * wv);
    const Vec dllr_dy2r =
        upstream_llr * (0.5 * pull2 - 0.5 * inv_sqrt2 * pullu + inv_sqrt2 * wv);

    const Vec dz1 = (dllr_dy1r.array() * (1.0 - c.y1r.array().square())).matrix();
    const Vec dz2 = (dllr_dy2r.array() * (1.0 - c.y2r.array().square())).matrix();
    grads.reduce_weight.noalias() += dz1 * c.y1.transpose();
    grads.reduce_weight.noalias() += dz2 * c.y2.transpose();
    grads.reduce_bias += dz1 + dz2;
    if (grad_y1) grad_y1->noalias() = p.reduce_weight.transpose() * dz1;
    if (grad_y2) grad_y2->noalias() = p.reduce_weight.transpose() * dz2;
}

}  // namespace av::bfs
