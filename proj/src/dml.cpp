#include "av/dml.hpp"

#include <cmath>

namespace av::dml {

DmlParams DmlParams::init(int d_lev, int d_emb, Rng& rng, double scale) {
    DmlParams p;
    p.weight = Mat::NullaryExpr(d_lev, d_emb, [&] { return rng.gaussian(0.0, scale); });
    p.bias = Vec::Zero(d_lev);
    p.gamma_log = 0.0;  // gamma = 1
    p.alpha_log = 0.0;  // alpha = 1
    return p;
}

DmlParams DmlParams::zeros(int d_lev, int d_emb) {
    DmlParams p;
    p.weight = Mat::Zero(d_lev, d_emb);
    p.bias = Vec::Zero(d_lev);
    p.gamma_log = 0.0;
    p.alpha_log = 0.0;
    return p;
}

Vec project(const Vec& embedding, const DmlParams& p) {
    require_dims(p.weight.cols() == embedding.size() && p.weight.rows() == p.bias.size(),
                 "project: parameter/embedding dimensions disagree");
    return tanh_open_vec(p.weight * embedding + p.bias);
}

double distance(const Vec& y1, const Vec& y2) {
    require_dims(y1.size() == y2.size(), "distance: LEV dimensions disagree");
    return (y1 - y2).squaredNorm();
}

double kernel_prob(double d, double gamma, double alpha) {
    if (gamma <= 0.0 || alpha <= 0.0) {
        throw InvalidHyperparam("kernel_prob: gamma and alpha must be positive");
    }
    if (d < 0.0) throw InvalidHyperparam("kernel_prob: distance must be nonnegative");
    return std::exp(-gamma * std::pow(d, alpha));
}

double dml_loss(double p_dml, int a, double tau_s, double tau_d) {
    if (!(0.0 <= tau_d && tau_d < tau_s && tau_s <= 1.0)) {
        throw InvalidThresholds("dml_loss: need 0 <= tau_d < tau_s <= 1");
    }
    if (a) {
        const double m = std::max(tau_s - p_dml, 0.0);
        return m * m;
    }
    const double m = std::max(p_dml - tau_d, 0.0);
    return m * m;
}

PairCache pair_forward(const Vec& x1, const Vec& x2, const DmlParams& p) {
    PairCache c;
    c.x1 = x1;
    c.x2 = x2;
    c.y1 = project(x1, p);
    c.y2 = project(x2, p);
    c.dist = distance(c.y1, c.y2);
    c.p = kernel_prob(c.dist, p.gamma(), p.alpha());
    return c;
}

void dml_backward(const PairCache& c, const DmlParams& p, int a, double tau_s,
                  double tau_d, double upstream, DmlParams& grads, Vec* grad_x1,
                  Vec* grad_x2) {
    // dL/dp through the squared hinge.
    double dL_dp = 0.0;
    if (a) {
        if (c.p < tau_s) dL_dp = -2.0 * (tau_s - c.p);
    } else {
        if (c.p > tau_d) dL_dp = 2.0 * (c.p - tau_d);
    }
    dL_dp *= upstream;

    const double gamma = p.gamma();
    const double alpha = p.alpha();

    // p = exp(-gamma d^alpha)
    double dp_dd = 0.0;
    if (c.dist > 0.0) {
        dp_dd = -gamma * alpha * std::pow(c.dist, alpha - 1.0) * c.p;
    } else if (alpha == 1.0) {
        dp_dd = -gamma * c.p;
    }
    // d^alpha and d^alpha * log d both vanish at d = 0 for alpha >= 1.
    const double d_pow = c.dist > 0.0 ? std::pow(c.dist, alpha) : 0.0;
    const double dp_dgamma = -d_pow * c.p;
    const double dp_dalpha = c.dist > 0.0 ? -gamma * d_pow * std::log(c.dist) * c.p : 0.0;

    if (p.train_kernel) {
        grads.gamma_log += dL_dp * dp_dgamma * gamma;
        grads.alpha_log += dL_dp * dp_dalpha * alpha;
    }

    const double dL_dd = dL_dp * dp_dd;
    const Vec diff = c.y1 - c.y2;
    const Vec dL_dy1 = 2.0 * dL_dd * diff;
    const Vec dL_dy2 = -dL_dy1;

    const Vec dz1 = (dL_dy1.array() * (1.0 - c.y1.array().square())).matrix();
    const Vec dz2 = (dL_dy2.array() * (1.0 - c.y2.array().square())).matrix();
    grads.weight.noalias() += dz1 * c.x1.transpose();
    grads.weight.noalias() += dz2 * c.x2.transpose();
    grads.bias += dz1 + dz2;
    if (grad_x1) grad_x1->noalias() = p.weight.transpose() * dz1;
    if (grad_x2) grad_x2->noalias() = p.weight.transpose() * dz2;
}

}  // namespace av::dml
