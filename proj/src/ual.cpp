#include "av/ual.hpp"

#include <cmath>

namespace av::ual {

UalParams UalParams::init(int d_ual, int d_lev, Rng& rng, double scale) {
    UalParams p;
    p.fuse_weight = Mat::NullaryExpr(d_ual, d_lev, [&] { return rng.gaussian(0.0, scale); });
    p.fuse_bias = Vec::Zero(d_ual);
    p.cm_weight = Mat::NullaryExpr(4, d_ual, [&] { return rng.gaussian(0.0, scale); });
    p.cm_bias = Vec::Zero(4);
    return p;
}

UalParams UalParams::zeros(int d_ual, int d_lev) {
    UalParams p;
    p.fuse_weight = Mat::Zero(d_ual, d_lev);
    p.fuse_bias = Vec::Zero(d_ual);
    p.cm_weight = Mat::Zero(4, d_ual);
    p.cm_bias = Vec::Zero(4);
    return p;
}

Vec fuse(const Vec& y1, const Vec& y2, const UalParams& p) {
    require_dims(y1.size() == y2.size() && p.fuse_weight.cols() == y1.size() &&
                     p.fuse_weight.rows() == p.fuse_bias.size(),
                 "fuse: dimensions disagree");
    const Vec sq = (y1 - y2).array().square().matrix();
    return tanh_open_vec(p.fuse_weight * sq + p.fuse_bias);
}

Confusion confusion(const Vec& fused, const UalParams& p) {
    require_dims(p.cm_weight.cols() == fused.size() && p.cm_weight.rows() == 4 &&
                     p.cm_bias.size() == 4,
                 "confusion: dimensions disagree");
    const Vec logits = p.cm_weight * fused + p.cm_bias;
    Confusion cm;
    for (int i = 0; i < 2; ++i) {
        const double l0 = logits[2 * i + 0];
        const double l1 = logits[2 * i + 1];
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m);
        const double e1 = std::exp(l1 - m);
        const double z = e0 + e1;
        cm.p(i, 0) = e0 / z;
        cm.p(i, 1) = e1 / z;
    }
    return cm;
}

Eigen::Vector2d ual_posterior(const Confusion& cm, double p_bfs_h1) {
    const double p0 = 1.0 - p_bfs_h1;
    Eigen::Vector2d out;
    out[0] = cm.p(0, 0) * p0 + cm.p(1, 0) * p_bfs_h1;
    out[1] = cm.p(0, 1) * p0 + cm.p(1, 1) * p_bfs_h1;
    return out;
}

double ual_loss(const Eigen::Vector2d& p_ual, const Confusion& cm, int true_j,
                double beta) {
    double reg = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double q = cm.p(i, j);
            reg += q * std::log(clamp_prob(q));
        }
    }
    return -std::log(clamp_prob(p_ual[true_j])) + beta * reg;
}

UalCache forward(const Vec& y1, const Vec& y2, double p_bfs_h1, const UalParams& p) {
    UalCache c;
    c.sq = (y1 - y2).array().square().matrix();
    c.fused = tanh_open_vec(p.fuse_weight * c.sq + p.fuse_bias);
    c.cm = confusion(c.fused, p);
    c.p_bfs_h1 = p_bfs_h1;
    c.p_ual = ual_posterior(c.cm, p_bfs_h1);
    return c;
}

void ual_backward(const UalCache& c, const UalParams& p, int true_j,
                  double upstream, UalParams& grads) {
    const double p_bfs[2] = {1.0 - c.p_bfs_h1, c.p_bfs_h1};

    // dL/d cm(i,j): NLL routes through the mixture, the entropy
    // regularizer contributes log q + 1.
    Eigen::Matrix2d dcm;
    const double denom = clamp_prob(c.p_ual[true_j]);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double g = 0.0;
            if (j == true_j) g -= p_bfs[i] / denom;
            g += p.beta * (std::log(clamp_prob(c.cm.p(i, j))) + 1.0);
            dcm(i, j) = g * upstream;
        }
    }

    // Softmax rows: dlogit(i,j) = q(i,j) (g(i,j) - sum_j' g(i,j') q(i,j')).
    Vec dlogits(4);
    for (int i = 0; i < 2; ++i) {
        const double dot = dcm(i, 0) * c.cm.p(i, 0) + dcm(i, 1) * c.cm.p(i, 1);
        for (int j = 0; j < 2; ++j) {
            dlogits[2 * i + j] = c.cm.p(i, j) * (dcm(i, j) - dot);
        }
    }

    grads.cm_weight.noalias() += dlogits * c.fused.transpose();
    grads.cm_bias += dlogits;

    const Vec dfused = p.cm_weight.transpose() * dlogits;
    const Vec dpre = (dfused.array() * (1.0 - c.fused.array().square())).matrix();
    grads.fuse_weight.noalias() += dpre * c.sq.transpose();
    grads.fuse_bias += dpre;
}

}  // namespace av::ual
