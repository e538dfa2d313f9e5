#include <cmath>
#include <functional>

#include "av/trainer.hpp"

namespace av::trainer {

namespace {

constexpr double kStep = 1e-5;

double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central finite differences of `loss` against the analytic gradient stored
// in `grads`, sweeping every entry of `params`.
template <class P>
double fd_sweep(P& params, const P& grads, const std::function<double()>& loss) {
    double worst = 0.0;
    const std::size_t n = optim::param_count(params);
    for (std::size_t i = 0; i < n; ++i) {
        optim::add_to_entry(params, i, kStep);
        const double up = loss();
        optim::add_to_entry(params, i, -2.0 * kStep);
        const double down = loss();
        optim::add_to_entry(params, i, kStep);
        const double numeric = (up - down) / (2.0 * kStep);
        worst = std::max(worst, rel_err(optim::get_entry(grads, i), numeric));
    }
    return worst;
}

Vec random_vec(Eigen::Index n, Rng& rng, double scale) {
    return Vec::NullaryExpr(n, [&] { return rng.gaussian(0.0, scale); });
}

ComponentCheck check_dml(int cases, int max_dim, Rng& rng) {
    ComponentCheck out{"dml(+encoder)", 0.0, cases};
    const double tau_s = 0.91;
    const double tau_d = 0.09;
    for (int c = 0; c < cases; ++c) {
        const int d_feat = rng.uniform_int(1, max_dim);
        const int d_emb = rng.uniform_int(1, max_dim);
        const int d_lev = rng.uniform_int(1, max_dim);
        const int a = rng.uniform_int(0, 1);

        auto enc = encoder::EncoderParams::init(d_emb, d_feat, rng, 0.5);
        enc.bias = random_vec(d_emb, rng, 0.3);
        auto dmlp = dml::DmlParams::init(d_lev, d_emb, rng, 0.5);
        dmlp.bias = random_vec(d_lev, rng, 0.3);
        dmlp.gamma_log = rng.uniform(-0.3, 0.5);
        dmlp.alpha_log = rng.uniform(0.0, 0.4);
        Vec f1 = random_vec(d_feat, rng, 1.0);
        Vec f2 = random_vec(d_feat, rng, 1.0);

        const auto loss = [&] {
            const Vec x1 = encoder::encode(f1, enc);
            const Vec x2 = encoder::encode(f2, enc);
            const auto pc = dml::pair_forward(x1, x2, dmlp);
            return dml::dml_loss(pc.p, a, tau_s, tau_d);
        };

        // Stay off the hinge kink, where one-sided differences lie.
        {
            const Vec x1 = encoder::encode(f1, enc);
            const Vec x2 = encoder::encode(f2, enc);
            const auto pc = dml::pair_forward(x1, x2, dmlp);
            const double boundary = a ? tau_s : tau_d;
            if (std::abs(pc.p - boundary) < 1e-3) {
                --c;
                continue;
            }
        }

        auto enc_grads = enc.zeros_like();
        auto dml_grads = dmlp.zeros_like();
        Vec gx1, gx2;
        const Vec x1 = encoder::encode(f1, enc);
        const Vec x2 = encoder::encode(f2, enc);
        const auto pc = dml::pair_forward(x1, x2, dmlp);
        dml::dml_backward(pc, dmlp, a, tau_s, tau_d, 1.0, dml_grads, &gx1, &gx2);
        encoder::encode_backward(f1, enc, x1, gx1, enc_grads);
        encoder::encode_backward(f2, enc, x2, gx2, enc_grads);

        out.max_rel_err = std::max(out.max_rel_err, fd_sweep(dmlp, dml_grads, loss));
        out.max_rel_err = std::max(out.max_rel_err, fd_sweep(enc, enc_grads, loss));
    }
    return out;
}

ComponentCheck check_bfs(int cases, int max_dim, Rng& rng) {
    ComponentCheck out{"bfs", 0.0, cases};
    for (int c = 0; c < cases; ++c) {
        const int d_lev = rng.uniform_int(1, max_dim);
        const int d_bfs = rng.uniform_int(1, std::min(max_dim, 4));
        const int a = rng.uniform_int(0, 1);

        auto p = bfs::BfsParams::init(d_bfs, d_lev, rng, 0.5);
        p.reduce_bias = random_vec(d_bfs, rng, 0.3);
        p.mu = random_vec(d_bfs, rng, 0.4);
        for (int i = 0; i < d_bfs; ++i) {
            for (int j = 0; j <= i; ++j) {
                p.w_chol_raw(i, j) += rng.gaussian(0.0, 0.25);
                p.b_chol_raw(i, j) += rng.gaussian(0.0, 0.25);
            }
        }
        const Vec y1 = random_vec(d_lev, rng, 0.6);
        const Vec y2 = random_vec(d_lev, rng, 0.6);

        const auto loss = [&] {
            const auto sc = bfs::score_forward(y1, y2, p);
            return bfs::bfs_loss(sc.score.posterior_h1, a);
        };

        auto grads = p.zeros_like();
        const auto sc = bfs::score_forward(y1, y2, p);
        bfs::bfs_backward(sc, p, sc.score.posterior_h1 - a, grads);
        out.max_rel_err = std::max(out.max_rel_err, fd_sweep(p, grads, loss));
    }
    return out;
}

ComponentCheck check_ual(int cases, int max_dim, Rng& rng) {
    ComponentCheck out{"ual", 0.0, cases};
    for (int c = 0; c < cases; ++c) {
        const int d_lev = rng.uniform_int(1, max_dim);
        const int d_ual = rng.uniform_int(1, max_dim);
        const int true_j = rng.uniform_int(0, 1);

        auto p = ual::UalParams::init(d_ual, d_lev, rng, 0.5);
        p.fuse_bias = random_vec(d_ual, rng, 0.3);
        p.cm_bias = random_vec(4, rng, 0.3);
        p.beta = rng.uniform(0.0, 0.3);
        const Vec y1 = random_vec(d_lev, rng, 0.6);
        const Vec y2 = random_vec(d_lev, rng, 0.6);
        const double p_bfs = rng.uniform(0.05, 0.95);

        const auto loss = [&] {
            const auto uc = ual::forward(y1, y2, p_bfs, p);
            return ual::ual_loss(uc.p_ual, uc.cm, true_j, p.beta);
        };

        auto grads = p.zeros_like();
        const auto uc = ual::forward(y1, y2, p_bfs, p);
        ual::ual_backward(uc, p, true_j, 1.0, grads);
        out.max_rel_err = std::max(out.max_rel_err, fd_sweep(p, grads, loss));
    }
    return out;
}

ComponentCheck check_o2d2(int cases, int max_dim, Rng& rng) {
    ComponentCheck out{"o2d2", 0.0, cases};
    for (int c = 0; c < cases; ++c) {
        const int d_lev = rng.uniform_int(1, max_dim);
        const int d_h1 = rng.uniform_int(1, max_dim);
        const int d_h2 = rng.uniform_int(1, max_dim);
        const int label = rng.uniform_int(0, 1);
        const double w_pos = rng.uniform(0.5, 2.0);
        const double w_neg = rng.uniform(0.5, 2.0);

        auto p = o2d2::O2d2Params::init(2 * d_lev + 4, d_h1, d_h2, rng, 0.5);
        p.b1 = random_vec(d_h1, rng, 0.3);
        p.b2 = random_vec(d_h2, rng, 0.3);
        p.b3 = random_vec(1, rng, 0.3);

        ual::Confusion cm;
        const double c0 = rng.uniform(0.05, 0.95);
        const double c1 = rng.uniform(0.05, 0.95);
        cm.p << 1.0 - c0, c0, 1.0 - c1, c1;
        const Vec input =
            o2d2::build_input(random_vec(d_lev, rng, 0.6), random_vec(d_lev, rng, 0.6), cm);

        const auto loss = [&] {
            return o2d2::o2d2_loss(o2d2::o2d2_forward(input, p), label, w_pos, w_neg);
        };

        auto grads = p.zeros_like();
        const auto fc = o2d2::forward(input, p);
        o2d2::o2d2_backward(fc, p, label, 1.0, grads, w_pos, w_neg);
        out.max_rel_err = std::max(out.max_rel_err, fd_sweep(p, grads, loss));
    }
    return out;
}

}  // namespace

GradCheckReport grad_check_all(int cases_per_component, int max_dim, std::uint64_t seed) {
    Rng rng(seed);
    GradCheckReport report;
    report.components.push_back(check_dml(cases_per_component, max_dim, rng));
    report.components.push_back(check_bfs(cases_per_component, max_dim, rng));
    report.components.push_back(check_ual(cases_per_component, max_dim, rng));
    report.components.push_back(check_o2d2(cases_per_component, max_dim, rng));
    return report;
}

}  // namespace av::trainer
