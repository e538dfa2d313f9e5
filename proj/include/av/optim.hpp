#pragma once

#include <cmath>
#include <cstddef>
#include <tuple>
#include <type_traits>

namespace av::optim {

namespace detail {

template <class Ptr, class F, class P, class... Ps>
void apply_field(Ptr ptr, F& f, P& first, Ps&... rest) {
    f(first.*ptr, rest.*ptr...);
}

}  // namespace detail

// Applies f to every trainable field of one or more structurally identical
// parameter structs (parallel iteration driven by P::fields()).
template <class P, class F, class... Ps>
void zip_fields(F&& f, P& first, Ps&... rest) {
    std::apply([&](auto... ptrs) { (detail::apply_field(ptrs, f, first, rest...), ...); },
               std::remove_cv_t<P>::fields());
}

template <class P>
void zero_fields(P& p) {
    zip_fields([](auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_arithmetic_v<T>) {
            x = 0.0;
        } else {
            x.setZero();
        }
    }, p);
}

template <class P>
std::size_t param_count(const P& p) {
    std::size_t n = 0;
    zip_fields([&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_arithmetic_v<T>) {
            ++n;
        } else {
            n += static_cast<std::size_t>(x.size());
        }
    }, p);
    return n;
}

// Flat indexed access over all trainable entries; handy for finite
// differences and hashing.
template <class P, class F>
void visit_entry(P& p, std::size_t idx, F&& f) {
    std::size_t base = 0;
    bool done = false;
    zip_fields([&](auto& x) {
        if (done) return;
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_arithmetic_v<T>) {
            if (idx == base) {
                f(x);
                done = true;
            }
            ++base;
        } else {
            const auto sz = static_cast<std::size_t>(x.size());
            if (idx < base + sz) {
                f(x.data()[idx - base]);
                done = true;
            }
            base += sz;
        }
    }, p);
}

template <class P>
double get_entry(const P& p, std::size_t idx) {
    double out = 0.0;
    visit_entry(const_cast<P&>(p), idx, [&](double& x) { out = x; });
    return out;
}

template <class P>
void add_to_entry(P& p, std::size_t idx, double delta) {
    visit_entry(p, idx, [&](double& x) { x += delta; });
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied before the moment update
};

// Adaptive-moment gradient descent; moments are stored in two extra
// instances of the parameter struct itself.
template <class P>
class Adam {
public:
    Adam(const P& like, AdamConfig cfg = {}) : cfg_(cfg), m_(like), v_(like) {
        zero_fields(m_);
        zero_fields(v_);
    }

    void step(P& params, const P& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const double b1 = cfg_.beta1;
        const double b2 = cfg_.beta2;
        const double lr = cfg_.lr;
        const double eps = cfg_.eps;
        const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
        zip_fields([&](auto& p, const auto& g, auto& m, auto& v) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_arithmetic_v<T>) {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                p = decay * p - lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            } else {
                m = b1 * m + (1.0 - b1) * g;
                v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
                p.array() = decay * p.array() -
                            lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
            }
        }, params, grads, m_, v_);
    }

private:
    AdamConfig cfg_;
    long t_ = 0;
    P m_, v_;
};

}  // namespace av::optim
