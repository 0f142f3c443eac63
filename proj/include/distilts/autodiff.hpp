#pragma once

// Reverse-mode differentiation over dense float64 arrays.
//
// A graph is built eagerly as operations are applied to Var handles and is
// discarded when the last handle to its output goes away. Training code
// rebuilds the graph on every step: model parameters live in plain Arrays and
// are bound to fresh leaf nodes through a ParamBinder.
//
//   ParamBinder binder;
//   Var w = binder.bind(weights);
//   Var loss = mean(square(sub(matmul(x, w), y)));
//   backward(loss);
//   const Array& dw = binder.grad(weights);

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "distilts/array.hpp"
#include "distilts/error.hpp"

namespace distilts {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward rule: receives the node (value, grad, parents) and pushes the
// node's gradient into the gradients of its parents.
using BackwardFn = std::function<void(Node&)>;

struct Node {
    Array value;
    Array grad;  // materialized lazily, same shape as value
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<NodePtr> parents;
    BackwardFn backward;
    const char* op = "leaf";

    Array& ensure_grad() {
        if (grad.shape() != value.shape()) grad = Array(value.shape(), 0.0);
        return grad;
    }
    bool has_grad() const { return grad.shape() == value.shape() && grad.size() == value.size(); }
};

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Array& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    std::size_t rank() const { return node_->value.rank(); }
    double item() const { return node_->value.item(); }
    bool requires_grad() const { return node_->requires_grad; }

    // Gradient accumulated by backward(); zeros if none has reached this node.
    Array grad() const { return node_->has_grad() ? node_->grad : Array(node_->value.shape(), 0.0); }
    void zero_grad() { node_->grad = Array(); }

    const NodePtr& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    NodePtr node_;
};

inline Var parameter(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

inline Var constant(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

// Binds persistent parameter arrays to leaf nodes for one graph. With
// tracking disabled the leaves are constants and no backward state is kept.
class ParamBinder {
public:
    explicit ParamBinder(bool track_grad = true) : track_(track_grad) {}

    Var bind(const Array& param) {
        for (auto& [ptr, var] : bound_) {
            if (ptr == &param) return var;
        }
        Var v = track_ ? parameter(param) : constant(param);
        bound_.emplace_back(&param, v);
        return v;
    }

    bool tracking() const { return track_; }

    bool is_bound(const Array& param) const {
        for (const auto& [ptr, var] : bound_) {
            if (ptr == &param) return true;
        }
        return false;
    }

    // Gradient for a bound parameter; zeros when it was bound but unreached.
    Array grad(const Array& param) const {
        for (const auto& [ptr, var] : bound_) {
            if (ptr == &param) return var.grad();
        }
        throw ContractError("diffcore", "grad() requested for a parameter that was never bound");
    }

    const std::vector<std::pair<const Array*, Var>>& bound() const { return bound_; }

private:
    bool track_;
    std::vector<std::pair<const Array*, Var>> bound_;
};

namespace detail {

inline void require_finite(const Array& a, const char* op) {
    if (!a.all_finite()) {
        throw NumericError(std::string("operation '") + op + "' produced a non-finite value");
    }
}

inline Var make_result(Array value, std::vector<Var> inputs, const char* op, BackwardFn bw) {
    require_finite(value, op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_leaf = false;
    n->op = op;
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
    if (n->requires_grad) {
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError("diffcore", std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                             " vs " + shape_str(b.shape()));
    }
}

// C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
inline void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = a[i * k + p];
                if (aip == 0.0) continue;
                const double* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
            }
        }
    } else if (!trans_a && trans_b) {
        // B stored n x k
        for (std::size_t i = 0; i < m; ++i) {
            const double* ai = a + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double* bj = b + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                c[i * n + j] += s;
            }
        }
    } else if (trans_a && !trans_b) {
        // A stored k x m
        for (std::size_t p = 0; p < k; ++p) {
            const double* ap = a + p * m;
            const double* bp = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double api = ap[i];
                if (api == 0.0) continue;
                double* ci = c + i * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
                c[i * n + j] += s;
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

// [m x k] * [k x n], or batched [B x m x k] * [B x k x n].
inline Var matmul(const Var& a, const Var& b) {
    const bool batched = a.rank() == 3 && b.rank() == 3;
    if (!batched && !(a.rank() == 2 && b.rank() == 2)) {
        throw DimensionError("diffcore", "matmul expects two matrices or two batches of matrices, got " +
                                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t off = batched ? 1 : 0;
    const std::size_t batch = batched ? a.dim(0) : 1;
    const std::size_t m = a.dim(off), k = a.dim(off + 1), n = b.dim(off + 1);
    if (b.dim(off) != k || (batched && b.dim(0) != batch)) {
        throw DimensionError("diffcore", "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                             shape_str(b.shape()));
    }
    Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
    Array out(out_shape);
    for (std::size_t s = 0; s < batch; ++s) {
        detail::gemm(a.value().data().data() + s * m * k, false, b.value().data().data() + s * k * n, false,
                     out.data().data() + s * m * n, m, k, n, false);
    }
    return detail::make_result(std::move(out), {a, b}, "matmul", [batch, m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data().data();
        for (std::size_t s = 0; s < batch; ++s) {
            if (pa.requires_grad) {
                detail::gemm(g + s * m * n, false, pb.value.data().data() + s * k * n, true,
                             pa.ensure_grad().data().data() + s * m * k, m, n, k, true);
            }
            if (pb.requires_grad) {
                detail::gemm(pa.value.data().data() + s * m * k, true, g + s * m * n, false,
                             pb.ensure_grad().data().data() + s * k * n, k, m, n, true);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "add");
    Array out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
    return detail::make_result(std::move(out), {a, b}, "add", [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto pg = p->ensure_grad().data();
            auto g = self.grad.data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "sub");
    Array out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
    return detail::make_result(std::move(out), {a, b}, "sub", [](Node& self) {
        auto g = self.grad.data();
        if (self.parents[0]->requires_grad) {
            auto pg = self.parents[0]->ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (self.parents[1]->requires_grad) {
            auto pg = self.parents[1]->ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "mul");
    Array out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
    return detail::make_result(std::move(out), {a, b}, "mul", [](Node& self) {
        auto g = self.grad.data();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto pg = pa.ensure_grad().data();
            auto bv = pb.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[i];
        }
        if (pb.requires_grad) {
            auto pg = pb.ensure_grad().data();
            auto av = pa.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double s) {
    Array out = a.value();
    for (double& v : out.data()) v *= s;
    return detail::make_result(std::move(out), {a}, "scale", [s](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
    });
}

inline Var add_scalar(const Var& a, double s) {
    Array out = a.value();
    for (double& v : out.data()) v += s;
    return detail::make_result(std::move(out), {a}, "add_scalar", [](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

inline Var square(const Var& a) {
    Array out = a.value();
    for (double& v : out.data()) v *= v;
    return detail::make_result(std::move(out), {a}, "square", [](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto x = self.parents[0]->value.data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += 2.0 * x[i] * g[i];
    });
}

// Subgradient 0 at 0.
inline Var abs(const Var& a) {
    Array out = a.value();
    for (double& v : out.data()) v = std::fabs(v);
    return detail::make_result(std::move(out), {a}, "abs", [](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto x = self.parents[0]->value.data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double sgn = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            pg[i] += sgn * g[i];
        }
    });
}

// sqrt(a^2 + b^2) elementwise; the gradient at the origin is taken as 0.
inline Var magnitude(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "magnitude");
    Array out(a.shape());
    auto av = a.value().data();
    auto bv = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::hypot(av[i], bv[i]);
    return detail::make_result(std::move(out), {a, b}, "magnitude", [](Node& self) {
        auto g = self.grad.data();
        auto r = self.value.data();
        for (std::size_t which = 0; which < 2; ++which) {
            auto& p = *self.parents[which];
            if (!p.requires_grad) continue;
            auto pg = p.ensure_grad().data();
            auto pv = p.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (r[i] > 0.0) pg[i] += g[i] * pv[i] / r[i];
            }
        }
    });
}

enum class ElementwiseOp { add, sub, mul, square, abs, scale };

// Dispatch form used where the operation is chosen at runtime. `b` is ignored
// by the unary kinds; `s` is only read by scale.
inline Var elementwise(ElementwiseOp op, const Var& a, const Var& b, double s = 1.0) {
    switch (op) {
        case ElementwiseOp::add: return add(a, b);
        case ElementwiseOp::sub: return sub(a, b);
        case ElementwiseOp::mul: return mul(a, b);
        case ElementwiseOp::square: return square(a);
        case ElementwiseOp::abs: return abs(a);
        case ElementwiseOp::scale: return scale(a, s);
    }
    throw ContractError("diffcore", "unknown elementwise op");
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, gelu };

inline constexpr double kGeluCoeff = 0.044715;

inline double gelu_value(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluCoeff * x * x * x)));
}

inline double gelu_derivative(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    const double inner = c * (x + kGeluCoeff * x * x * x);
    const double t = std::tanh(inner);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCoeff * x * x);
}

inline Var nonlinearity(Activation kind, const Var& a) {
    if (kind == Activation::identity) return a;
    Array out = a.value();
    if (kind == Activation::relu) {
        for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    } else {
        for (double& v : out.data()) v = gelu_value(v);
    }
    return detail::make_result(std::move(out), {a}, kind == Activation::relu ? "relu" : "gelu",
                               [kind](Node& self) {
                                   auto pg = self.parents[0]->ensure_grad().data();
                                   auto x = self.parents[0]->value.data();
                                   auto g = self.grad.data();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       const double d = kind == Activation::relu ? (x[i] > 0.0 ? 1.0 : 0.0)
                                                                                 : gelu_derivative(x[i]);
                                       pg[i] += d * g[i];
                                   }
                               });
}

inline Var relu(const Var& a) { return nonlinearity(Activation::relu, a); }
inline Var gelu(const Var& a) { return nonlinearity(Activation::gelu, a); }

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduction { sum, mean };

// Reduces over `axes` (all axes when empty); reduced axes are dropped.
inline Var reduce(Reduction kind, const Var& a, std::vector<std::size_t> axes = {}) {
    const std::size_t rank = a.rank();
    std::vector<bool> reduced(rank, axes.empty());
    for (std::size_t ax : axes) {
        if (ax >= rank || reduced[ax]) {
            throw DimensionError("diffcore", "reduce: axis " + std::to_string(ax) + " invalid or repeated for shape " +
                                                 shape_str(a.shape()));
        }
        reduced[ax] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        if (reduced[i]) {
            count *= a.dim(i);
        } else {
            out_shape.push_back(a.dim(i));
        }
    }
    // map[i] = output index of input element i
    std::vector<std::size_t> out_stride(rank, 0);
    {
        std::size_t s = 1;
        for (std::size_t i = rank; i-- > 0;) {
            if (!reduced[i]) {
                out_stride[i] = s;
                s *= a.dim(i);
            }
        }
    }
    auto map = std::make_shared<std::vector<std::size_t>>(a.value().size());
    {
        std::vector<std::size_t> idx(rank, 0);
        std::size_t o = 0;
        for (std::size_t n = 0; n < map->size(); ++n) {
            (*map)[n] = o;
            for (std::size_t ax = rank; ax-- > 0;) {
                ++idx[ax];
                o += out_stride[ax];
                if (idx[ax] < a.dim(ax)) break;
                o -= out_stride[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }
    Array out(out_shape, 0.0);
    auto in = a.value().data();
    auto od = out.data();
    for (std::size_t n = 0; n < in.size(); ++n) od[(*map)[n]] += in[n];
    const double factor = (kind == Reduction::mean && count > 0) ? 1.0 / static_cast<double>(count) : 1.0;
    if (factor != 1.0) {
        for (double& v : od) v *= factor;
    }
    return detail::make_result(std::move(out), {a}, kind == Reduction::sum ? "sum" : "mean",
                               [map, factor](Node& self) {
                                   auto pg = self.parents[0]->ensure_grad().data();
                                   auto g = self.grad.data();
                                   for (std::size_t n = 0; n < pg.size(); ++n) pg[n] += factor * g[(*map)[n]];
                               });
}

inline Var sum(const Var& a, std::vector<std::size_t> axes = {}) { return reduce(Reduction::sum, a, std::move(axes)); }
inline Var mean(const Var& a, std::vector<std::size_t> axes = {}) {
    return reduce(Reduction::mean, a, std::move(axes));
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Var reshape(const Var& a, Shape shape) {
    Array out = a.value().reshaped(std::move(shape));
    return detail::make_result(std::move(out), {a}, "reshape", [](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

inline Var permute(const Var& a, std::vector<std::size_t> perm) {
    Array out = permuted(a.value(), perm);
    return detail::make_result(std::move(out), {a}, "permute", [perm](Node& self) {
        Array back = permuted(self.grad, inverse_permutation(perm));
        auto pg = self.parents[0]->ensure_grad().data();
        auto g = back.data();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Fused layers
// ---------------------------------------------------------------------------

// a[..., n] + bias[n], bias repeated over all leading positions.
inline Var add_bias(const Var& a, const Var& bias) {
    if (bias.rank() != 1 || a.rank() == 0 || a.shape().back() != bias.dim(0)) {
        throw DimensionError("diffcore", "add_bias: cannot add " + shape_str(bias.shape()) + " to rows of " +
                                             shape_str(a.shape()));
    }
    const std::size_t n = bias.dim(0);
    Array out = a.value();
    auto od = out.data();
    auto bd = bias.value().data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i % n];
    return detail::make_result(std::move(out), {a, bias}, "add_bias", [n](Node& self) {
        auto g = self.grad.data();
        if (self.parents[0]->requires_grad) {
            auto pg = self.parents[0]->ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        if (self.parents[1]->requires_grad) {
            auto pg = self.parents[1]->ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) pg[i % n] += g[i];
        }
    });
}

// z[N x u] gated by every row of gates[T x u]: out[n, t, :] = z[n, :] * gates[t, :].
inline Var expand_mul(const Var& z, const Var& gates) {
    if (z.rank() != 2 || gates.rank() != 2 || z.dim(1) != gates.dim(1)) {
        throw DimensionError("diffcore", "expand_mul: incompatible shapes " + shape_str(z.shape()) + " and " +
                                             shape_str(gates.shape()));
    }
    const std::size_t n_rows = z.dim(0), steps = gates.dim(0), u = z.dim(1);
    Array out(Shape{n_rows, steps, u});
    auto zd = z.value().data();
    auto ed = gates.value().data();
    auto od = out.data();
    for (std::size_t n = 0; n < n_rows; ++n)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t k = 0; k < u; ++k) od[(n * steps + t) * u + k] = zd[n * u + k] * ed[t * u + k];
    return detail::make_result(std::move(out), {z, gates}, "expand_mul", [n_rows, steps, u](Node& self) {
        auto g = self.grad.data();
        auto& pz = *self.parents[0];
        auto& pe = *self.parents[1];
        auto zv = pz.value.data();
        auto ev = pe.value.data();
        if (pz.requires_grad) {
            auto zg = pz.ensure_grad().data();
            for (std::size_t n = 0; n < n_rows; ++n)
                for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t k = 0; k < u; ++k) zg[n * u + k] += g[(n * steps + t) * u + k] * ev[t * u + k];
        }
        if (pe.requires_grad) {
            auto eg = pe.ensure_grad().data();
            for (std::size_t n = 0; n < n_rows; ++n)
                for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t k = 0; k < u; ++k) eg[t * u + k] += g[(n * steps + t) * u + k] * zv[n * u + k];
        }
    });
}

// Softmax over the last axis.
inline Var softmax_last(const Var& a) {
    if (a.rank() == 0) throw DimensionError("diffcore", "softmax_last on a scalar");
    const std::size_t n = a.shape().back();
    const std::size_t rows = n ? a.value().size() / n : 0;
    Array out = a.value();
    auto od = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = od.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= s;
    }
    return detail::make_result(std::move(out), {a}, "softmax", [rows, n](Node& self) {
        auto pg = self.parents[0]->ensure_grad().data();
        auto y = self.value.data();
        auto g = self.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) pg[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

// Layer normalization over the last axis with affine gain/shift.
inline Var layer_norm(const Var& a, const Var& gain, const Var& shift, double eps = 1e-5) {
    if (a.rank() == 0 || gain.rank() != 1 || shift.rank() != 1 || gain.dim(0) != a.shape().back() ||
        shift.dim(0) != a.shape().back()) {
        throw DimensionError("diffcore", "layer_norm: parameter shape does not match last axis of " +
                                             shape_str(a.shape()));
    }
    const std::size_t n = a.shape().back();
    const std::size_t rows = a.value().size() / n;
    auto xhat = std::make_shared<Array>(a.shape());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    Array out(a.shape());
    auto x = a.value().data();
    auto gd = gain.value().data();
    auto sd = shift.value().data();
    auto xh = xhat->data();
    auto od = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += x[r * n + j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (x[r * n + j] - mu) * (x[r * n + j] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            xh[r * n + j] = (x[r * n + j] - mu) * inv;
            od[r * n + j] = xh[r * n + j] * gd[j] + sd[j];
        }
    }
    return detail::make_result(std::move(out), {a, gain, shift}, "layer_norm", [xhat, inv_std, rows, n](Node& self) {
        auto g = self.grad.data();
        auto xh = xhat->data();
        auto& px = *self.parents[0];
        auto& pgain = *self.parents[1];
        auto& pshift = *self.parents[2];
        auto gv = pgain.value.data();
        if (pgain.requires_grad) {
            auto dg = pgain.ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) dg[i % n] += g[i] * xh[i];
        }
        if (pshift.requires_grad) {
            auto ds = pshift.ensure_grad().data();
            for (std::size_t i = 0; i < g.size(); ++i) ds[i % n] += g[i];
        }
        if (px.requires_grad) {
            auto dx = px.ensure_grad().data();
            const double nn = static_cast<double>(n);
            for (std::size_t r = 0; r < rows; ++r) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = g[r * n + j] * gv[j];
                    s1 += dxh;
                    s2 += dxh * xh[r * n + j];
                }
                const double inv = (*inv_std)[r];
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = g[r * n + j] * gv[j];
                    dx[r * n + j] += inv / nn * (nn * dxh - s1 - xh[r * n + j] * s2);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Reverse topological traversal from a scalar loss. Leaf gradients accumulate
// across calls; interior gradients are recomputed each call.
inline void backward(const Var& loss) {
    if (loss.value().size() != 1) {
        throw ContractError("diffcore", "backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf) n->grad = Array(n->value.shape(), 0.0);
    }
    auto& root = loss.node()->ensure_grad();
    root[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

}  // namespace distilts
