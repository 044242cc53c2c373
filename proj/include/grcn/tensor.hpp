#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "grcn/errors.hpp"

namespace grcn {

// Dense row-major tensor of 64-bit reals. Rank 0 (shape {}) is a scalar
// with exactly one element.
class Tensor {
public:
    Tensor() : shape_{}, values_(1, 0.0) {}

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(extent_product(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != extent_product(shape_)) {
            throw ShapeError("tensor values length " + std::to_string(values_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.values_[0] = v;
        return t;
    }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.values_.begin(), t.values_.end(), v);
        return t;
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return values_.size(); }
    bool is_scalar() const { return values_.size() == 1; }

    std::size_t rows() const { return shape_.size() >= 1 ? shape_[0] : 1; }
    std::size_t cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double norm2() const {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s);
    }

    std::string shape_str() const { return shape_string(shape_); }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << "x";
            os << shape[i];
        }
        os << "]";
        return os.str();
    }

private:
    static std::size_t extent_product(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("zero extent in shape " + shape_string(shape));
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

}  // namespace grcn
