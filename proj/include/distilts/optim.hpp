#pragma once

// Adaptive-moment optimizer with bias correction, and global-norm clipping.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "distilts/array.hpp"
#include "distilts/error.hpp"

namespace distilts {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Array> first_moment;
    std::vector<Array> second_moment;
    std::size_t step = 0;

    static AdamState for_params(std::span<Array* const> params) {
        AdamState s;
        for (const Array* p : params) {
            s.first_moment.emplace_back(p->shape(), 0.0);
            s.second_moment.emplace_back(p->shape(), 0.0);
        }
        return s;
    }
};

//   m <- b1 m + (1 - b1) g        v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps)
inline void adaptive_update(std::span<Array* const> params, std::span<const Array> grads, AdamState& state,
                            const AdamOptions& opt) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ContractError("trainer", "optimizer state does not match parameter list");
    }
    ++state.step;
    const double k = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(opt.beta1, k);
    const double c2 = 1.0 - std::pow(opt.beta2, k);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto g = grads[i].data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        if (g.size() != p.size() || m.size() != p.size()) {
            throw ContractError("trainer", "gradient shape does not match parameter shape");
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
            p[j] -= opt.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
        }
    }
}

inline double global_norm(std::span<const Array> grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) s += v * v;
    return std::sqrt(s);
}

// Rescales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
inline double clip_global_norm(std::span<Array> grads, double max_norm) {
    const double norm = global_norm(grads);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.data()) v *= f;
    }
    return norm;
}

}  // namespace distilts
