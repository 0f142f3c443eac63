#pragma once

// Training objectives: horizon weights, the supervised and horizon-weighted
// distillation losses, and the trend-projection (T-KD) and
// frequency/difference (FD-KD) comparison objectives.
//
// Forecast tensors are laid out [batch x horizon x channel].

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "distilts/autodiff.hpp"
#include "distilts/signal.hpp"

namespace distilts {

// Mean-one exponential weights over forecast steps:
//   w_t = exp(tau * t / (T - 1)) / ((1/T) * sum_j exp(tau * j / (T - 1)))
class HorizonWeights {
public:
    static HorizonWeights exponential(double tau, std::size_t horizon) {
        if (horizon == 0) throw ContractError("losses", "horizon weights need horizon >= 1");
        if (!(tau >= 0.0) || !std::isfinite(tau)) {
            throw ContractError("losses", "horizon temperature tau must be finite and >= 0, got " + std::to_string(tau));
        }
        std::vector<double> raw(horizon, 1.0);
        if (horizon > 1) {
            const double denom = static_cast<double>(horizon - 1);
            for (std::size_t t = 0; t < horizon; ++t) raw[t] = std::exp(tau * static_cast<double>(t) / denom);
        }
        HorizonWeights hw = normalized(std::move(raw));
        hw.tau_ = tau;
        return hw;
    }

    static HorizonWeights uniform(std::size_t horizon) { return exponential(0.0, horizon); }

    // Rescales arbitrary positive weights to mean one.
    static HorizonWeights normalized(std::vector<double> raw) {
        if (raw.empty()) throw ContractError("losses", "horizon weights need horizon >= 1");
        double total = 0.0;
        for (double v : raw) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("losses", "horizon weights must be positive");
            total += v;
        }
        const double mean = total / static_cast<double>(raw.size());
        for (double& v : raw) v /= mean;
        HorizonWeights hw;
        hw.weights_ = std::move(raw);
        return hw;
    }

    // tau used to generate the weights; nullopt for weights built from raw values.
    std::optional<double> tau() const { return tau_; }
    std::size_t horizon() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    double operator[](std::size_t t) const { return weights_[t]; }

private:
    HorizonWeights() = default;
    std::optional<double> tau_;
    std::vector<double> weights_;
};

inline HorizonWeights horizon_weights(double tau, std::size_t horizon) {
    return HorizonWeights::exponential(tau, horizon);
}

struct LossWeights {
    double lambda_kd = 1.0;
    double lambda_fta = 0.1;
    double alpha = 0.5;
    double beta = 1.0;
    double gamma = 1.0;
    bool weight_supervised = false;

    void validate() const {
        for (auto [name, v] : {std::pair{"lambda_kd", lambda_kd}, std::pair{"lambda_fta", lambda_fta},
                               std::pair{"alpha", alpha}, std::pair{"beta", beta}, std::pair{"gamma", gamma}}) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ConfigError("losses", std::string(name) + " must be finite and >= 0");
            }
        }
    }
};

// Trend projection for T-KD: centered moving average along the horizon with
// edge replication.
struct TrendProjector {
    std::size_t kernel = 5;

    void validate(std::size_t horizon) const {
        if (kernel == 0 || kernel % 2 == 0 || kernel > horizon) {
            throw ContractError("losses", "trend kernel must be odd and in [1, T], got " + std::to_string(kernel) +
                                              " for T=" + std::to_string(horizon));
        }
    }
};

namespace detail {

inline void require_forecast_pair(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != 3 || a != b) {
        throw DimensionError("losses", std::string(op) + ": expected matching [B x T x C] tensors, got " +
                                           shape_str(a) + " and " + shape_str(b));
    }
}

// w_t repeated over batch and channel.
inline Array weight_grid(const Shape& shape, const HorizonWeights& w) {
    if (w.horizon() != shape[1]) {
        throw DimensionError("losses", "horizon weights have T=" + std::to_string(w.horizon()) +
                                           " but forecast has T=" + std::to_string(shape[1]));
    }
    Array grid(shape);
    const std::size_t steps = shape[1], channels = shape[2];
    auto g = grid.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = w[(i / channels) % steps];
    return grid;
}

inline Var weighted_mse(const Var& pred, const Array& target, const HorizonWeights* weights) {
    Var sq = square(sub(pred, constant(target)));
    if (weights) sq = mul(sq, constant(weight_grid(pred.shape(), *weights)));
    return mean(sq);
}

inline Var plain_mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

}  // namespace detail

// Applies a [T x K] operator along the horizon axis of a [B x T x C] tensor,
// giving [B x C x K].
inline Var along_horizon(const Var& y, const Array& op) {
    const std::size_t b = y.dim(0), t = y.dim(1), c = y.dim(2);
    if (op.rank() != 2 || op.dim(0) != t) {
        throw DimensionError("losses", "horizon operator " + shape_str(op.shape()) + " does not fit T=" + std::to_string(t));
    }
    Var rows = reshape(permute(y, {0, 2, 1}), {b * c, t});
    return reshape(matmul(rows, constant(op)), {b, c, op.dim(1)});
}

// Amplitude of the real-input DFT along the horizon, [B x C x (T/2 + 1)].
inline Var amplitude_spectrum(const Var& y) {
    const std::size_t t = y.dim(1);
    return magnitude(along_horizon(y, dft_real_matrix(t)), along_horizon(y, dft_imag_matrix(t)));
}

inline Var first_difference(const Var& y) { return along_horizon(y, difference_matrix(y.dim(1))); }

inline Var trend_projection(const Var& y, const TrendProjector& projector) {
    projector.validate(y.dim(1));
    return along_horizon(y, moving_average_matrix(y.dim(1), projector.kernel));
}

// 1/(BCT) sum (y - y_hat)^2, optionally scaled by w_t per step.
inline Var supervised_loss(const Var& y_hat, const Array& y, const HorizonWeights* weights = nullptr) {
    detail::require_forecast_pair(y_hat.shape(), y.shape(), "supervised_loss");
    return detail::weighted_mse(y_hat, y, weights);
}

// 1/(BCT) sum w_t (y_teacher - y_hat)^2.
inline Var kd_loss(const Var& y_hat, const Array& y_teacher, const HorizonWeights& weights) {
    detail::require_forecast_pair(y_hat.shape(), y_teacher.shape(), "kd_loss");
    return detail::weighted_mse(y_hat, y_teacher, &weights);
}

// MSE between trend projections of student and teacher forecasts.
inline Var trend_distill_term(const Var& y_hat, const Array& y_teacher, const TrendProjector& projector) {
    detail::require_forecast_pair(y_hat.shape(), y_teacher.shape(), "tkd_loss");
    return detail::plain_mse(trend_projection(y_hat, projector), trend_projection(constant(y_teacher), projector));
}

// beta * L_freq + gamma * L_diff. Terms with a zero coefficient are skipped.
inline Var spectral_distill_term(const Var& y_hat, const Array& y_teacher, double beta, double gamma) {
    detail::require_forecast_pair(y_hat.shape(), y_teacher.shape(), "fdkd_loss");
    if (gamma > 0.0 && y_hat.dim(1) < 2) {
        throw ContractError("losses", "difference term needs T >= 2");
    }
    Var teacher = constant(y_teacher);
    Var total = constant(Array::scalar(0.0));
    if (beta > 0.0) {
        total = add(total, scale(detail::plain_mse(amplitude_spectrum(y_hat), amplitude_spectrum(teacher)), beta));
    }
    if (gamma > 0.0) {
        total = add(total, scale(detail::plain_mse(first_difference(y_hat), first_difference(teacher)), gamma));
    }
    return total;
}

// MSE(y_hat, y) + alpha * MSE(P(y_hat), P(y_teacher)).
inline Var tkd_loss(const Var& y_hat, const Array& y, const Array& y_teacher, const TrendProjector& projector,
                    double alpha) {
    return add(supervised_loss(y_hat, y), scale(trend_distill_term(y_hat, y_teacher, projector), alpha));
}

// MSE(y_hat, y) + alpha * (beta * L_freq + gamma * L_diff).
inline Var fdkd_loss(const Var& y_hat, const Array& y, const Array& y_teacher, double alpha, double beta,
                     double gamma) {
    return add(supervised_loss(y_hat, y), scale(spectral_distill_term(y_hat, y_teacher, beta, gamma), alpha));
}

// How the components combine.
enum class Objective {
    weighted_kd,  // L_sup + lambda_kd L_KD + lambda_fta L_FTA
    variant       // L_sup + alpha * (T-KD or FD-KD term)
};

struct LossComponents {
    Var supervised;
    std::optional<Var> kd;
    std::optional<Var> fta;
    std::optional<Var> variant_term;
};

struct LossTerm {
    double value = 0.0;
    double coefficient = 0.0;
    bool active = false;
    double contribution() const { return active ? value * coefficient : 0.0; }
};

struct LossBreakdown {
    LossTerm supervised;
    LossTerm kd;
    LossTerm fta;
    LossTerm variant;
    double total = 0.0;
};

struct TotalLoss {
    Var value;
    LossBreakdown breakdown;
};

inline TotalLoss total_loss(const LossComponents& parts, const LossWeights& w, Objective objective) {
    w.validate();
    if (!parts.supervised) throw ConfigError("losses", "supervised loss component is required");
    TotalLoss out;
    out.value = parts.supervised;
    out.breakdown.supervised = {parts.supervised.item(), 1.0, true};

    auto add_term = [&](const std::optional<Var>& term, double coef, LossTerm& slot, const char* name) {
        if (coef == 0.0 && !term) return;
        if (!term) {
            throw ConfigError("losses", std::string(name) + " component missing but its coefficient is nonzero");
        }
        out.value = add(out.value, scale(*term, coef));
        slot = {term->item(), coef, true};
    };

    if (objective == Objective::weighted_kd) {
        add_term(parts.kd, w.lambda_kd, out.breakdown.kd, "kd");
        add_term(parts.fta, w.lambda_fta, out.breakdown.fta, "fta");
    } else {
        add_term(parts.variant_term, w.alpha, out.breakdown.variant, "variant");
    }
    out.breakdown.total = out.value.item();
    return out;
}

}  // namespace distilts
