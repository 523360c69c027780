#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mlconvgec/common/error.hpp"

namespace mlconvgec::nc {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Rank 1 vectors, rank 2 matrices and the
/// rank 3 convolution filter banks are the only shapes the model uses.
class Array {
  public:
    Array() = default;

    explicit Array(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            fail(ErrorCategory::dimension, "data length " + std::to_string(data_.size()) +
                                               " does not match shape " + shape_str(shape_));
        }
    }

    static Array vector(std::initializer_list<double> values) {
        return Array({values.size()}, std::vector<double>(values));
    }

    static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
        return Array({rows, cols}, std::vector<double>(values));
    }

    static Array zeros_like(const Array& a) { return Array(a.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    bool empty() const noexcept { return data_.empty(); }

    /// Rank-2 view: a rank-1 array of length n is a single row.
    std::size_t rows() const noexcept { return shape_.size() == 1 ? 1 : shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Array& other) const = default;

  private:
    void check_shape() const {
        for (auto d : shape_) {
            if (d == 0) fail(ErrorCategory::dimension, "zero dimension in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace mlconvgec::nc
