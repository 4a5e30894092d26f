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

#include "protopath/core/error.hpp"

namespace protopath::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles. Most of the model works on rank-2
/// arrays; vectors are carried as 1 x n rows.
class NdArray {
public:
    NdArray() = default;

    explicit NdArray(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    NdArray(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw DimensionError("NdArray: shape " + shape_str(shape_) + " does not match " +
                                 std::to_string(data_.size()) + " values");
    }

    static NdArray zeros(std::size_t rows, std::size_t cols) { return NdArray({rows, cols}); }
    static NdArray ones(std::size_t rows, std::size_t cols) { return NdArray({rows, cols}, 1.0); }
    static NdArray full(std::size_t rows, std::size_t cols, double v) { return NdArray({rows, cols}, v); }

    static NdArray matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("NdArray::matrix: ragged rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return NdArray({r, c}, std::move(data));
    }

    /// 1 x n row vector.
    static NdArray row(std::vector<double> values) {
        const std::size_t n = values.size();
        return NdArray({1, n}, std::move(values));
    }

    /// n x 1 column vector.
    static NdArray column(std::vector<double> values) {
        const std::size_t n = values.size();
        return NdArray({n, 1}, std::move(values));
    }

    static NdArray identity(std::size_t n) {
        NdArray out({n, n});
        for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
        return out;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Leading dimension for rank-2 arrays (1 for rank-1).
    std::size_t rows() const {
        require_matrix();
        return shape_.size() == 2 ? shape_[0] : 1;
    }
    std::size_t cols() const {
        require_matrix();
        return shape_.back();
    }
    std::size_t last_dim() const { return shape_.empty() ? 1 : shape_.back(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }

    std::span<const double> row_span(std::size_t r) const {
        const std::size_t c = last_dim();
        return std::span<const double>(data_).subspan(r * c, c);
    }
    std::span<double> row_span(std::size_t r) {
        const std::size_t c = last_dim();
        return std::span<double>(data_).subspan(r * c, c);
    }

    /// Reinterpret with a new shape of equal element count.
    NdArray reshaped(Shape shape) const { return NdArray(std::move(shape), data_); }

    NdArray transposed() const {
        require_matrix();
        const std::size_t r = rows(), c = cols();
        NdArray out({c, r});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const NdArray& other) const { return shape_ == other.shape_; }

    friend bool operator==(const NdArray& a, const NdArray& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void require_matrix() const {
        if (shape_.empty() || shape_.size() > 2)
            throw DimensionError("expected rank 1 or 2 array, got " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const NdArray& a, const NdArray& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace protopath::ad
