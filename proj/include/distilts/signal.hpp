#pragma once

// Fixed linear operators along a time axis, expressed as matrices so they can
// be applied with matmul inside a differentiable graph: row-vector series of
// length n times an [n x m] operator gives the transformed series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "distilts/array.hpp"
#include "distilts/error.hpp"

namespace distilts {

// Centered moving average with edge replication: output t averages
// x[clamp(t + j, 0, n - 1)] for j in [-(k-1)/2, (k-1)/2].
inline Array moving_average_matrix(std::size_t n, std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) {
        throw ContractError("signal", "moving-average kernel must be odd and positive, got " + std::to_string(kernel));
    }
    Array m(Shape{n, n}, 0.0);
    const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
    const double w = 1.0 / static_cast<double>(kernel);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            const auto src = std::clamp(static_cast<std::ptrdiff_t>(t) + j, std::ptrdiff_t{0}, last);
            m.at(static_cast<std::size_t>(src), t) += w;
        }
    }
    return m;
}

// Forward first difference: out[t] = x[t + 1] - x[t], t = 0..n-2.
inline Array difference_matrix(std::size_t n) {
    if (n < 2) throw ContractError("signal", "first difference needs at least 2 steps");
    Array m(Shape{n, n - 1}, 0.0);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        m.at(t, t) = -1.0;
        m.at(t + 1, t) = 1.0;
    }
    return m;
}

inline std::size_t rfft_bins(std::size_t n) { return n / 2 + 1; }

// Real and imaginary parts of the real-input DFT, bins 0..floor(n/2):
// X_k = sum_t x_t exp(-2 pi i k t / n).
inline Array dft_real_matrix(std::size_t n) {
    const std::size_t bins = rfft_bins(n);
    Array m(Shape{n, bins});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < bins; ++k)
            m.at(t, k) = std::cos(2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    return m;
}

inline Array dft_imag_matrix(std::size_t n) {
    const std::size_t bins = rfft_bins(n);
    Array m(Shape{n, bins});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < bins; ++k)
            m.at(t, k) = -std::sin(2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    return m;
}

}  // namespace distilts
