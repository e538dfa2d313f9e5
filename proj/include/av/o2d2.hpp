#pragma once

#include <tuple>

#include "av/rng.hpp"
#include "av/types.hpp"
#include "av/ual.hpp"

namespace av::o2d2 {

// Feed-forward detector for undecidable trials, trained after the verifier
// is frozen. epsilon is the half-width of the "too close to 0.5" band used
// when building training labels; it is tuned, never trained.
struct O2d2Params {
    Mat w1;  // D_h1 x D_in
    Vec b1;
    Mat w2;  // D_h2 x D_h1
    Vec b2;
    Mat w3;  // 1 x D_h2
    Vec b3;  // 1
    double epsilon = 0.1;

    static O2d2Params init(int d_in, int d_h1, int d_h2, Rng& rng, double scale = 0.1);
    static O2d2Params zeros(int d_in, int d_h1, int d_h2);
    O2d2Params zeros_like() const {
        O2d2Params z = zeros(static_cast<int>(w1.cols()), static_cast<int>(w1.rows()),
                             static_cast<int>(w2.rows()));
        z.epsilon = epsilon;
        return z;
    }

    static constexpr auto fields() {
        return std::make_tuple(&O2d2Params::w1, &O2d2Params::b1, &O2d2Params::w2,
                               &O2d2Params::b2, &O2d2Params::w3, &O2d2Params::b3);
    }
};

// 1 iff the verifier was wrong or its posterior sits within epsilon of 0.5.
int o2d2_label(int a, int a_hat, double p_ual_h1, double epsilon);

// Concatenation of (y1-y2)^o2, (y1+y2)^o2 and the flattened confusion
// matrix; swap-invariant by construction.
Vec build_input(const Vec& y1, const Vec& y2, const ual::Confusion& cm);

struct ForwardCache {
    Vec in, h1, h2;
    double z3 = 0.0;
    double p_h2 = 0.5;
};

ForwardCache forward(const Vec& input, const O2d2Params& p);

double o2d2_forward(const Vec& input, const O2d2Params& p);

// BCE with optional per-class weights (1, 1 recovers the plain loss).
double o2d2_loss(double p_h2, int label, double w_pos = 1.0, double w_neg = 1.0);

void o2d2_backward(const ForwardCache& c, const O2d2Params& p, int label,
                   double upstream, O2d2Params& grads, double w_pos = 1.0,
                   double w_neg = 1.0);

}  // namespace av::o2d2
