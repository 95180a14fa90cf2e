#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tabitd/errors.hpp"

namespace tabitd {

/// Dense row-major matrix of doubles. The one value container every layer
/// and dataset in this library speaks.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw DimensionError("tensor data length does not match rows*cols");
    }

    static Tensor2 zeros(std::size_t r, std::size_t c) { return Tensor2(r, c); }

    static Tensor2 full(std::size_t r, std::size_t c, double v) {
        Tensor2 t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    Tensor2& operator+=(const Tensor2& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    void require_same_shape(const Tensor2& o, const char* what) const {
        if (!same_shape(o))
            throw DimensionError(std::string(what) + ": shape mismatch " + shape_str() +
                                 " vs " + o.shape_str());
    }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }
};

/// C = A * B  (rows_A x cols_B). i-k-j loop order so the inner loop streams.
void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out);

/// C = A^T * B. Used for weight gradients (x^T * dy).
void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out);

/// C = A * B^T. Used for input gradients (dy * W^T).
void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out);

/// Elementwise product.
Tensor2 hadamard(const Tensor2& a, const Tensor2& b);

inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    Tensor2 out;
    matmul(a, b, out);
    return out;
}

inline Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    Tensor2 out;
    matmul_tn(a, b, out);
    return out;
}

inline Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    Tensor2 out;
    matmul_nt(a, b, out);
    return out;
}

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    a.require_same_shape(b, what);
}

} // namespace tabitd
