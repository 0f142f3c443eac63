#pragma once

// Student forecasters. Both map a normalized lookback x [B x L x C] to a
// forecast [B x T x C] and expose one embedding per variate [B x C x d_S]
// for temporal alignment.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "distilts/autodiff.hpp"
#include "distilts/signal.hpp"

namespace distilts {

struct StudentOutput {
    Var forecast;  // [B x T x C]
    Var hidden;    // [B x C x d_S]
};

using NamedParams = std::vector<std::pair<std::string, Array*>>;
using ConstNamedParams = std::vector<std::pair<std::string, const Array*>>;

namespace detail {

inline Array glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Array a(Shape{fan_in, fan_out});
    for (double& v : a.data()) v = dist(rng);
    return a;
}

inline void require_lookback(const Array& x, std::size_t lookback, const char* who) {
    if (x.rank() != 3 || x.dim(1) != lookback) {
        throw DimensionError("students", std::string(who) + " expects [B x " + std::to_string(lookback) +
                                             " x C] input, got " + shape_str(x.shape()));
    }
}

// [B x L x C] -> [B*C x L], one row per (sample, channel).
inline Array channel_rows(const Array& x) {
    const std::size_t b = x.dim(0), l = x.dim(1), c = x.dim(2);
    return permuted(x, {0, 2, 1}).reshaped({b * c, l});
}

inline ConstNamedParams as_const(const NamedParams& params) {
    ConstNamedParams out;
    for (const auto& [name, p] : params) out.emplace_back(name, p);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Decomposition-linear student
// ---------------------------------------------------------------------------

struct Decomposition {
    Array trend;     // [B x L x C]
    Array seasonal;  // x - trend
};

// Moving-average trend (edge replicated) and seasonal residual along axis 1.
inline Decomposition decompose(const Array& x, std::size_t kernel) {
    if (x.rank() != 3) throw DimensionError("students", "decompose expects [B x L x C], got " + shape_str(x.shape()));
    if (kernel == 0 || kernel % 2 == 0) {
        throw ContractError("students", "trend kernel must be odd, got " + std::to_string(kernel));
    }
    const std::size_t b = x.dim(0), l = x.dim(1), c = x.dim(2);
    const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto last = static_cast<std::ptrdiff_t>(l) - 1;
    const double w = 1.0 / static_cast<double>(kernel);
    Decomposition out{Array(x.shape()), Array(x.shape())};
    auto in = x.data();
    auto tr = out.trend.data();
    auto se = out.seasonal.data();
    for (std::size_t s = 0; s < b; ++s)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::ptrdiff_t j = -half; j <= half; ++j) {
                    const auto src = static_cast<std::size_t>(
                        std::clamp(static_cast<std::ptrdiff_t>(t) + j, std::ptrdiff_t{0}, last));
                    acc += in[(s * l + src) * c + ch];
                }
                const std::size_t i = (s * l + t) * c + ch;
                tr[i] = acc * w;
                se[i] = in[i] - tr[i];
            }
    return out;
}

// forecast = trend W_trend + seasonal W_seasonal + bias, with one weight set
// shared by every channel. Its variate embedding is the normalized lookback
// itself (d_S = L), a time-separable representation.
struct LinearStudent {
    std::size_t trend_kernel = 25;
    Array w_trend;     // [L x T]
    Array w_seasonal;  // [L x T]
    Array bias;        // [T]

    std::size_t lookback() const { return w_trend.dim(0); }
    std::size_t horizon() const { return w_trend.dim(1); }
    std::size_t hidden_dim() const { return lookback(); }

    static LinearStudent init(std::size_t lookback, std::size_t horizon, std::size_t trend_kernel,
                              std::mt19937_64& rng) {
        if (lookback == 0 || horizon == 0) throw ContractError("students", "lookback and horizon must be positive");
        if (trend_kernel == 0 || trend_kernel % 2 == 0) {
            throw ContractError("students", "trend kernel must be odd, got " + std::to_string(trend_kernel));
        }
        // Same range as a default-initialized dense layer with fan-in L.
        const double limit = 1.0 / std::sqrt(static_cast<double>(lookback));
        std::uniform_real_distribution<double> dist(-limit, limit);
        LinearStudent m;
        m.trend_kernel = trend_kernel;
        m.w_trend = Array(Shape{lookback, horizon});
        m.w_seasonal = Array(Shape{lookback, horizon});
        for (double& v : m.w_trend.data()) v = dist(rng);
        for (double& v : m.w_seasonal.data()) v = dist(rng);
        m.bias = Array(Shape{horizon}, 0.0);
        return m;
    }

    NamedParams named_parameters() {
        return {{"linear.w_trend", &w_trend}, {"linear.w_seasonal", &w_seasonal}, {"linear.bias", &bias}};
    }
};

inline StudentOutput linear_forward(const LinearStudent& m, const Array& x, ParamBinder& binder) {
    detail::require_lookback(x, m.lookback(), "linear student");
    const std::size_t b = x.dim(0), c = x.dim(2), steps = m.horizon();
    const Decomposition parts = decompose(x, m.trend_kernel);
    Var out = add(matmul(constant(detail::channel_rows(parts.trend)), binder.bind(m.w_trend)),
                  matmul(constant(detail::channel_rows(parts.seasonal)), binder.bind(m.w_seasonal)));
    out = add_bias(out, binder.bind(m.bias));
    StudentOutput result;
    result.forecast = permute(reshape(out, {b, c, steps}), {0, 2, 1});
    result.hidden = constant(permuted(x, {0, 2, 1}));
    return result;
}

// ---------------------------------------------------------------------------
// Variate-token attention student
// ---------------------------------------------------------------------------

// One token per channel: embed the whole lookback, one pre-norm block of
// single-head attention across channels and a GELU feed-forward layer, then a
// linear head from token to horizon.
struct VariateStudent {
    Array embed_w, embed_b;  // [L x d], [d]
    Array norm1_gain, norm1_shift;
    Array w_query, w_key, w_value, w_output;  // [d x d]
    Array norm2_gain, norm2_shift;
    Array ffn_w1, ffn_b1;  // [d x d_ff], [d_ff]
    Array ffn_w2, ffn_b2;  // [d_ff x d], [d]
    Array head_w, head_b;  // [d x T], [T]
    double norm_eps = 1e-5;

    std::size_t lookback() const { return embed_w.dim(0); }
    std::size_t model_dim() const { return embed_w.dim(1); }
    std::size_t ff_dim() const { return ffn_w1.dim(1); }
    std::size_t horizon() const { return head_w.dim(1); }
    std::size_t hidden_dim() const { return model_dim(); }

    static VariateStudent init(std::size_t lookback, std::size_t horizon, std::size_t model_dim, std::size_t ff_dim,
                               std::mt19937_64& rng) {
        if (model_dim == 0) throw ContractError("students", "variate student needs d_S >= 1");
        if (ff_dim == 0) throw ContractError("students", "variate student needs d_ff >= 1");
        if (lookback == 0 || horizon == 0) throw ContractError("students", "lookback and horizon must be positive");
        const std::size_t d = model_dim;
        VariateStudent m;
        m.embed_w = detail::glorot_uniform(lookback, d, rng);
        m.embed_b = Array(Shape{d}, 0.0);
        m.norm1_gain = Array(Shape{d}, 1.0);
        m.norm1_shift = Array(Shape{d}, 0.0);
        m.w_query = detail::glorot_uniform(d, d, rng);
        m.w_key = detail::glorot_uniform(d, d, rng);
        m.w_value = detail::glorot_uniform(d, d, rng);
        m.w_output = detail::glorot_uniform(d, d, rng);
        m.norm2_gain = Array(Shape{d}, 1.0);
        m.norm2_shift = Array(Shape{d}, 0.0);
        m.ffn_w1 = detail::glorot_uniform(d, ff_dim, rng);
        m.ffn_b1 = Array(Shape{ff_dim}, 0.0);
        m.ffn_w2 = detail::glorot_uniform(ff_dim, d, rng);
        m.ffn_b2 = Array(Shape{d}, 0.0);
        m.head_w = detail::glorot_uniform(d, horizon, rng);
        m.head_b = Array(Shape{horizon}, 0.0);
        return m;
    }

    NamedParams named_parameters() {
        return {{"variate.embed_w", &embed_w},       {"variate.embed_b", &embed_b},
                {"variate.norm1_gain", &norm1_gain}, {"variate.norm1_shift", &norm1_shift},
                {"variate.w_query", &w_query},       {"variate.w_key", &w_key},
                {"variate.w_value", &w_value},       {"variate.w_output", &w_output},
                {"variate.norm2_gain", &norm2_gain}, {"variate.norm2_shift", &norm2_shift},
                {"variate.ffn_w1", &ffn_w1},         {"variate.ffn_b1", &ffn_b1},
                {"variate.ffn_w2", &ffn_w2},         {"variate.ffn_b2", &ffn_b2},
                {"variate.head_w", &head_w},         {"variate.head_b", &head_b}};
    }
};

inline StudentOutput variate_forward(const VariateStudent& m, const Array& x, ParamBinder& binder) {
    detail::require_lookback(x, m.lookback(), "variate student");
    const std::size_t b = x.dim(0), c = x.dim(2), d = m.model_dim(), steps = m.horizon();
    auto p = [&binder](const Array& a) { return binder.bind(a); };

    Var tokens = add_bias(matmul(constant(detail::channel_rows(x)), p(m.embed_w)), p(m.embed_b));  // [B*C x d]

    Var normed = layer_norm(tokens, p(m.norm1_gain), p(m.norm1_shift), m.norm_eps);
    Var q = reshape(matmul(normed, p(m.w_query)), {b, c, d});
    Var k = reshape(matmul(normed, p(m.w_key)), {b, c, d});
    Var v = reshape(matmul(normed, p(m.w_value)), {b, c, d});
    Var scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(d)));
    Var mixed = reshape(matmul(softmax_last(scores), v), {b * c, d});
    tokens = add(tokens, matmul(mixed, p(m.w_output)));

    normed = layer_norm(tokens, p(m.norm2_gain), p(m.norm2_shift), m.norm_eps);
    Var ff = gelu(add_bias(matmul(normed, p(m.ffn_w1)), p(m.ffn_b1)));
    tokens = add(tokens, add_bias(matmul(ff, p(m.ffn_w2)), p(m.ffn_b2)));

    Var out = add_bias(matmul(tokens, p(m.head_w)), p(m.head_b));
    StudentOutput result;
    result.forecast = permute(reshape(out, {b, c, steps}), {0, 2, 1});
    result.hidden = reshape(tokens, {b, c, d});
    return result;
}

// ---------------------------------------------------------------------------
// Type-erased student
// ---------------------------------------------------------------------------

enum class StudentKind { linear, variate };

inline std::string to_string(StudentKind k) { return k == StudentKind::linear ? "linear" : "variate"; }

inline StudentKind parse_student_kind(const std::string& s) {
    if (s == "linear" || s == "dlinear") return StudentKind::linear;
    if (s == "variate" || s == "itransformer") return StudentKind::variate;
    throw ConfigError("students", "unknown student kind '" + s + "'");
}

struct StudentConfig {
    StudentKind kind = StudentKind::linear;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t trend_kernel = 25;
    std::size_t model_dim = 64;
    std::size_t ff_dim = 128;

    // Hidden sizes of the full-size setup (512 / 2048).
    static StudentConfig paper_scale(StudentKind kind, std::size_t lookback, std::size_t horizon) {
        StudentConfig c;
        c.kind = kind;
        c.lookback = lookback;
        c.horizon = horizon;
        c.model_dim = 512;
        c.ff_dim = 2048;
        return c;
    }
};

class StudentModel {
public:
    StudentModel() = default;
    explicit StudentModel(LinearStudent m) : impl_(std::move(m)) {}
    explicit StudentModel(VariateStudent m) : impl_(std::move(m)) {}

    static StudentModel create(const StudentConfig& cfg, std::mt19937_64& rng) {
        if (cfg.kind == StudentKind::linear) {
            return StudentModel(LinearStudent::init(cfg.lookback, cfg.horizon, cfg.trend_kernel, rng));
        }
        return StudentModel(VariateStudent::init(cfg.lookback, cfg.horizon, cfg.model_dim, cfg.ff_dim, rng));
    }

    StudentKind kind() const { return impl_.index() == 0 ? StudentKind::linear : StudentKind::variate; }

    StudentOutput forward(const Array& x, ParamBinder& binder) const {
        return std::visit(
            [&](const auto& m) {
                if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LinearStudent>) {
                    return linear_forward(m, x, binder);
                } else {
                    return variate_forward(m, x, binder);
                }
            },
            impl_);
    }

    Array predict(const Array& x) const {
        ParamBinder binder(false);
        return forward(x, binder).forecast.value();
    }

    std::size_t lookback() const {
        return std::visit([](const auto& m) { return m.lookback(); }, impl_);
    }
    std::size_t horizon() const {
        return std::visit([](const auto& m) { return m.horizon(); }, impl_);
    }
    std::size_t hidden_dim() const {
        return std::visit([](const auto& m) { return m.hidden_dim(); }, impl_);
    }

    NamedParams named_parameters() {
        return std::visit([](auto& m) { return m.named_parameters(); }, impl_);
    }
    ConstNamedParams named_parameters() const {
        return detail::as_const(const_cast<StudentModel*>(this)->named_parameters());
    }

    std::vector<Array*> parameters() {
        std::vector<Array*> out;
        for (auto& [name, p] : named_parameters()) out.push_back(p);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : named_parameters()) n += p->size();
        return n;
    }

    const LinearStudent* as_linear() const { return std::get_if<LinearStudent>(&impl_); }
    const VariateStudent* as_variate() const { return std::get_if<VariateStudent>(&impl_); }
    LinearStudent* as_linear() { return std::get_if<LinearStudent>(&impl_); }
    VariateStudent* as_variate() { return std::get_if<VariateStudent>(&impl_); }

private:
    std::variant<LinearStudent, VariateStudent> impl_;
};

inline std::size_t parameter_count(const StudentModel& m) { return m.parameter_count(); }

}  // namespace distilts
