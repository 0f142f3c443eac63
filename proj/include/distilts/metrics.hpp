#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "distilts/array.hpp"
#include "distilts/error.hpp"

namespace distilts {

namespace detail {

inline void require_metric_shapes(const Array& y_hat, const Array& y, const char* what) {
    if (y_hat.shape() != y.shape() || y.rank() != 3) {
        throw DimensionError("evalcli", std::string(what) + ": expected matching [B x T x C] arrays, got " +
                                            shape_str(y_hat.shape()) + " and " + shape_str(y.shape()));
    }
}

}  // namespace detail

inline double mse(const Array& y_hat, const Array& y) {
    detail::require_metric_shapes(y_hat, y, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
    return y.size() ? s / static_cast<double>(y.size()) : 0.0;
}

inline double mae(const Array& y_hat, const Array& y) {
    detail::require_metric_shapes(y_hat, y, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y_hat[i] - y[i]);
    return y.size() ? s / static_cast<double>(y.size()) : 0.0;
}

// Mean over batch and channel with the horizon step fixed.
inline std::vector<double> per_step_mse(const Array& y_hat, const Array& y) {
    detail::require_metric_shapes(y_hat, y, "per_step_mse");
    const std::size_t b = y.dim(0), steps = y.dim(1), c = y.dim(2);
    std::vector<double> out(steps, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = y_hat.at(i, t, ch) - y.at(i, t, ch);
                out[t] += d * d;
            }
    for (double& v : out) v /= static_cast<double>(b * c);
    return out;
}

inline std::vector<double> per_step_mae(const Array& y_hat, const Array& y) {
    detail::require_metric_shapes(y_hat, y, "per_step_mae");
    const std::size_t b = y.dim(0), steps = y.dim(1), c = y.dim(2);
    std::vector<double> out(steps, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) out[t] += std::fabs(y_hat.at(i, t, ch) - y.at(i, t, ch));
    for (double& v : out) v /= static_cast<double>(b * c);
    return out;
}

struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> mse_per_step;
    std::vector<double> mae_per_step;
    bool denormalized = true;

    // Mean per-step MSE over steps [begin, end).
    double mse_over_steps(std::size_t begin, std::size_t end) const {
        double s = 0.0;
        for (std::size_t t = begin; t < end; ++t) s += mse_per_step.at(t);
        return end > begin ? s / static_cast<double>(end - begin) : 0.0;
    }

    // Last quarter of the horizon, at least one step.
    double last_quarter_mse() const {
        const std::size_t steps = mse_per_step.size();
        const std::size_t q = std::max<std::size_t>(1, steps / 4);
        return mse_over_steps(steps - q, steps);
    }
};

inline MetricReport evaluate_metrics(const Array& y_hat, const Array& y, bool denormalized = true) {
    MetricReport r;
    r.mse = mse(y_hat, y);
    r.mae = mae(y_hat, y);
    r.mse_per_step = per_step_mse(y_hat, y);
    r.mae_per_step = per_step_mae(y_hat, y);
    r.denormalized = denormalized;
    return r;
}

}  // namespace distilts
