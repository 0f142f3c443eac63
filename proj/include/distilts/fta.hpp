#pragma once

// Factorized temporal alignment: expands one embedding per variate into one
// vector per (variate, forecast step) in the teacher's hidden space,
//
//   H_hat[b, d, t] = W_out^T phi((h[b, d] W_s) * E[t])
//
// with W_s [d_S x u], E [T x u], W_out [u x d_T]. The module is used only to
// form the alignment loss during training.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "distilts/autodiff.hpp"

namespace distilts {

struct FtaModule {
    Array w_s;    // [d_S x u]
    Array e;      // [T x u], row t is the time embedding of step t
    Array w_out;  // [u x d_T]
    Activation phi = Activation::gelu;

    std::size_t student_dim() const { return w_s.dim(0); }
    std::size_t latent_dim() const { return w_s.dim(1); }
    std::size_t horizon() const { return e.dim(0); }
    std::size_t teacher_dim() const { return w_out.dim(1); }

    std::vector<Array*> parameters() { return {&w_s, &e, &w_out}; }
    std::vector<const Array*> parameters() const { return {&w_s, &e, &w_out}; }

    std::size_t parameter_count() const { return w_s.size() + e.size() + w_out.size(); }

    void validate() const {
        if (w_s.rank() != 2 || e.rank() != 2 || w_out.rank() != 2 || e.dim(1) != w_s.dim(1) ||
            w_out.dim(0) != w_s.dim(1)) {
            throw DimensionError("fta", "inconsistent FTA parameter shapes W_s " + shape_str(w_s.shape()) + ", E " +
                                            shape_str(e.shape()) + ", W_out " + shape_str(w_out.shape()));
        }
        for (const Array* p : parameters()) {
            if (!p->all_finite()) throw NumericError("FTA parameters contain non-finite values");
        }
    }

    // Glorot-uniform projections; time embeddings start at one (neutral
    // gating) plus N(0, 0.02^2) noise.
    static FtaModule init(std::size_t student_dim, std::size_t latent_dim, std::size_t horizon,
                          std::size_t teacher_dim, Activation phi, std::mt19937_64& rng) {
        if (student_dim == 0 || latent_dim == 0 || horizon == 0 || teacher_dim == 0) {
            throw ContractError("fta", "FTA dimensions must be positive");
        }
        auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            Array a(Shape{fan_in, fan_out});
            for (double& v : a.data()) v = dist(rng);
            return a;
        };
        FtaModule m;
        m.w_s = glorot(student_dim, latent_dim);
        m.w_out = glorot(latent_dim, teacher_dim);
        m.e = Array(Shape{horizon, latent_dim});
        std::normal_distribution<double> noise(0.0, 0.02);
        for (double& v : m.e.data()) v = 1.0 + noise(rng);
        m.phi = phi;
        return m;
    }
};

// h_student [B x D x d_S] -> [B x D x T x d_T].
inline Var fta_forward(const FtaModule& m, const Var& h_student, ParamBinder& binder) {
    m.validate();
    if (h_student.rank() != 3 || h_student.dim(2) != m.student_dim()) {
        throw DimensionError("fta", "student embedding " + shape_str(h_student.shape()) + " does not match W_s rows " +
                                        std::to_string(m.student_dim()));
    }
    const std::size_t b = h_student.dim(0), d = h_student.dim(1);
    const std::size_t steps = m.horizon(), u = m.latent_dim();
    Var latent = matmul(reshape(h_student, {b * d, m.student_dim()}), binder.bind(m.w_s));
    Var gated = nonlinearity(m.phi, expand_mul(latent, binder.bind(m.e)));
    Var projected = matmul(reshape(gated, {b * d * steps, u}), binder.bind(m.w_out));
    return reshape(projected, {b, d, steps, m.teacher_dim()});
}

inline Array fta_forward(const FtaModule& m, const Array& h_student) {
    ParamBinder binder(false);
    return fta_forward(m, constant(h_student), binder).value();
}

// 1/(BDT) sum_{b,d,t} || predicted - teacher ||^2 over the d_T axis.
inline Var fta_loss(const Var& predicted, const Array& teacher_hidden) {
    if (predicted.rank() != 4 || predicted.shape() != teacher_hidden.shape()) {
        throw DimensionError("fta", "alignment expects matching [B x D x T x d_T] tensors, got " +
                                        shape_str(predicted.shape()) + " and " + shape_str(teacher_hidden.shape()));
    }
    const double positions = static_cast<double>(predicted.dim(0) * predicted.dim(1) * predicted.dim(2));
    return scale(sum(square(sub(predicted, constant(teacher_hidden)))), 1.0 / positions);
}

struct BoundaryInstance {
    FtaModule module;
    Array h_student;  // [B x D x T]
};

// The exact-recovery instance: the student embedding is the raw per-variate
// sequence (point-wise identity map), d_S = u = T, W_s = I, E_t = one-hot(t),
// phi = identity and W_out = ones [T x 1], so H_hat[b, d, t] = x[b, d, t].
inline BoundaryInstance boundary_construction(const Array& lookback) {
    if (lookback.rank() != 3) {
        throw DimensionError("fta", "boundary construction expects [B x D x T], got " + shape_str(lookback.shape()));
    }
    const std::size_t steps = lookback.dim(2);
    BoundaryInstance inst;
    inst.h_student = lookback;
    inst.module.w_s = Array(Shape{steps, steps}, 0.0);
    inst.module.e = Array(Shape{steps, steps}, 0.0);
    for (std::size_t i = 0; i < steps; ++i) {
        inst.module.w_s.at(i, i) = 1.0;
        inst.module.e.at(i, i) = 1.0;
    }
    inst.module.w_out = Array(Shape{steps, 1}, 1.0);
    inst.module.phi = Activation::identity;
    return inst;
}

}  // namespace distilts
