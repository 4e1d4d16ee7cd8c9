#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "iseat/errors.hpp"

namespace iseat::nd {

// Dense row-major tensor. Rank 1 and 2 are all the network code needs, but the
// shape is kept general. Element type is float or double; tests run in double.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(count(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != count(shape_))
            throw ShapeError("tensor value count " + std::to_string(values_.size()) +
                             " does not match shape product " + std::to_string(count(shape_)));
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::size_t rank() const { return shape_.size(); }
    std::size_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
    std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

    T* data() { return values_.data(); }
    const T* data() const { return values_.data(); }
    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    T& operator[](std::size_t i) { return values_[i]; }
    T operator[](std::size_t i) const { return values_[i]; }

    T& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    T at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T v : values_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

    // row view helpers for 2-D tensors
    T* row(std::size_t r) { return values_.data() + r * cols(); }
    const T* row(std::size_t r) const { return values_.data() + r * cols(); }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (const std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> values_;
};

template <typename T>
double l2_norm(const Tensor<T>& t) {
    double s = 0.0;
    for (const T v : t.values()) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

template <typename T>
double linf_norm(const Tensor<T>& t) {
    double m = 0.0;
    for (const T v : t.values()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

}  // namespace iseat::nd
