#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "distilts/error.hpp"

namespace distilts {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

// Dense row-major float64 array. The shape/data size invariant is enforced at
// construction and by every shape-changing method.
class Array {
public:
    Array() : shape_{0} {}

    explicit Array(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("diffcore", "array shape " + shape_str(shape_) + " holds " +
                                                 std::to_string(shape_size(shape_)) + " values, got " +
                                                 std::to_string(data_.size()));
        }
    }

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

    static Array vector(std::initializer_list<double> values) {
        return Array(Shape{values.size()}, std::vector<double>(values));
    }

    static Array matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("diffcore", "ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Array(Shape{r, c}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <typename... Idx>
    double& at(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    double at(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    double item() const {
        if (data_.size() != 1) {
            throw DimensionError("diffcore", "item() on array of shape " + shape_str(shape_));
        }
        return data_[0];
    }

    Array reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("diffcore",
                                 "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Array(std::move(shape), data_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Array& other) const = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) {
            throw DimensionError("diffcore", "index rank " + std::to_string(idx.size()) +
                                                 " does not match shape " + shape_str(shape_));
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) throw DimensionError("diffcore", "index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

// Copies `a` with its axes reordered: result axis i is source axis perm[i].
inline Array permuted(const Array& a, const std::vector<std::size_t>& perm) {
    const std::size_t rank = a.rank();
    if (perm.size() != rank) throw DimensionError("diffcore", "permutation rank mismatch");
    std::vector<bool> seen(rank, false);
    for (std::size_t p : perm) {
        if (p >= rank || seen[p]) throw DimensionError("diffcore", "invalid permutation");
        seen[p] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.dim(perm[i]);
    Array out(out_shape);
    if (a.size() == 0) return out;

    std::vector<std::size_t> src_stride(rank, 1);
    for (std::size_t i = rank; i-- > 1;) src_stride[i - 1] = src_stride[i] * a.dim(i);
    std::vector<std::size_t> stride(rank);
    for (std::size_t i = 0; i < rank; ++i) stride[i] = src_stride[perm[i]];

    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    auto in = a.data();
    auto dst = out.data();
    for (std::size_t n = 0; n < out.size(); ++n) {
        dst[n] = in[src];
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            src += stride[ax];
            if (idx[ax] < out_shape[ax]) break;
            src -= stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

}  // namespace distilts
