#include "av/o2d2.hpp"

#include <cmath>

namespace av::o2d2 {

O2d2Params O2d2Params::init(int d_in, int d_h1, int d_h2, Rng& rng, double scale) {
    O2d2Params p;
    p.w1 = Mat::NullaryExpr(d_h1, d_in, [&] { return rng.gaussian(0.0, scale); });
    p.b1 = Vec::Zero(d_h1);
    p.w2 = Mat::NullaryExpr(d_h2, d_h1, [&] { return rng.gaussian(0.0, scale); });
    p.b2 = Vec::Zero(d_h2);
    p.w3 = Mat::NullaryExpr(1, d_h2, [&] { return rng.gaussian(0.0, scale); });
    p.b3 = Vec::Zero(1);
    return p;
}

O2d2Params O2d2Params::zeros(int d_in, int d_h1, int d_h2) {
    O2d2Params p;
    p.w1 = Mat::Zero(d_h1, d_in);
    p.b1 = Vec::Zero(d_h1);
    p.w2 = Mat::Zero(d_h2, d_h1);
    p.b2 = Vec::Zero(d_h2);
    p.w3 = Mat::Zero(1, d_h2);
    p.b3 = Vec::Zero(1);
    return p;
}

int o2d2_label(int a, int a_hat, double p_ual_h1, double epsilon) {
    if (epsilon < 0.05 || epsilon > 0.15) {
        throw InvalidEpsilon("o2d2_label: epsilon must lie in [0.05, 0.15]");
    }
    if (a != a_hat) return 1;
    return std::abs(p_ual_h1 - 0.5) <= epsilon ? 1 : 0;
}

Vec build_input(const Vec& y1, const Vec& y2, const ual::Confusion& cm) {
    require_dims(y1.size() == y2.size(), "build_input: LEV dimensions disagree");
    const Eigen::Index d = y1.size();
    Vec out(2 * d + 4);
    out.head(d) = (y1 - y2).array().square().matrix();
    out.segment(d, d) = (y1 + y2).array().square().matrix();
    out[2 * d + 0] = cm.p(0, 0);
    out[2 * d + 1] = cm.p(0, 1);
    out[2 * d + 2] = cm.p(1, 0);
    out[2 * d + 3] = cm.p(1, 1);
    return out;
}

ForwardCache forward(const Vec& input, const O2d2Params& p) {
    require_dims(p.w1.cols() == input.size(), "o2d2 forward: input dimension disagrees");
    ForwardCache c;
    c.in = input;
    c.h1 = tanh_open_vec(p.w1 * input + p.b1);
    c.h2 = tanh_open_vec(p.w2 * c.h1 + p.b2);
    c.z3 = (p.w3 * c.h2)(0) + p.b3(0);
    c.p_h2 = sigmoid(c.z3);
    return c;
}

double o2d2_forward(const Vec& input, const O2d2Params& p) {
    return forward(input, p).p_h2;
}

double o2d2_loss(double p_h2, int label, double w_pos, double w_neg) {
    const double q = clamp_prob(p_h2);
    return label ? -w_pos * std::log(q) : -w_neg * std::log(1.0 - q);
}

void o2d2_backward(const ForwardCache& c, const O2d2Params& p, int label,
                   double upstream, O2d2Params& grads, double w_pos, double w_neg) {
    // d(BCE)/dz for the weighted loss.
    const double dz3 =
        upstream * (label ? w_pos * (c.p_h2 - 1.0) : w_neg * c.p_h2);
    grads.w3.noalias() += dz3 * c.h2.transpose();
    grads.b3(0) += dz3;

    const Vec dh2 = p.w3.transpose() * dz3;
    const Vec dz2 = (dh2.array() * (1.0 - c.h2.array().square())).matrix();
    grads.w2.noalias() += dz2 * c.h1.transpose();
    grads.b2 += dz2;

    const Vec dh1 = p.w2.transpose() * dz2;
    const Vec dz1 = (dh1.array() * (1.0 - c.h1.array().square())).matrix();
    grads.w1.noalias() += dz1 * c.in.transpose();
    grads.b1 += dz1;
}

}  // namespace av::o2d2
