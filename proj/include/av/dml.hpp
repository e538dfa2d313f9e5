#pragma once

#include <tuple>

#include "av/encoder.hpp"
#include "av/rng.hpp"
#include "av/types.hpp"

namespace av::dml {

// Projection to linguistic embedding vectors plus the kernelized contrastive
// objective. gamma/alpha live in log space so gradient steps keep them
// positive; alpha is additionally clamped to >= 1 after each update because
// the gradient of d^alpha blows up at d -> 0 for alpha < 1.
struct DmlParams {
    Mat weight;  // D_lev x D_emb
    Vec bias;    // D_lev
    double gamma_log = 0.0;
    double alpha_log = 0.0;
    bool train_kernel = true;

    double gamma() const { return std::exp(gamma_log); }
    double alpha() const { return std::exp(alpha_log); }

    static DmlParams init(int d_lev, int d_emb, Rng& rng, double scale = 0.1);
    static DmlParams zeros(int d_lev, int d_emb);
    DmlParams zeros_like() const {
        DmlParams z = zeros(static_cast<int>(weight.rows()), static_cast<int>(weight.cols()));
        z.train_kernel = train_kernel;
        return z;
    }

    static constexpr auto fields() {
        return std::make_tuple(&DmlParams::weight, &DmlParams::bias,
                               &DmlParams::gamma_log, &DmlParams::alpha_log);
    }
};

// y = tanh(W x + b)
Vec project(const Vec& embedding, const DmlParams& p);

// Squared Euclidean distance between two LEVs.
double distance(const Vec& y1, const Vec& y2);

// exp(-gamma * d^alpha) in (0, 1].
double kernel_prob(double d, double gamma, double alpha);

// a * max(tau_s - p, 0)^2 + (1-a) * max(p - tau_d, 0)^2
double dml_loss(double p_dml, int a, double tau_s, double tau_d);

struct PairCache {
    Vec x1, x2;  // document embeddings (inputs to project)
    Vec y1, y2;  // LEVs
    double dist = 0.0;
    double p = 0.0;  // kernel probability
};

PairCache pair_forward(const Vec& x1, const Vec& x2, const DmlParams& p);

// Backpropagates dml_loss through kernel/distance/projection. Accumulates
// into `grads`; embedding gradients are written (not accumulated) when the
// pointers are non-null so the caller can continue into the encoder.
void dml_backward(const PairCache& c, const DmlParams& p, int a, double tau_s,
                  double tau_d, double upstream, DmlParams& grads,
                  Vec* grad_x1 = nullptr, Vec* grad_x2 = nullptr);

}  // namespace av::dml
