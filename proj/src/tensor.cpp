#include "tabitd/tensor.hpp"

namespace tabitd {

void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    if (a.cols != b.rows)
        throw DimensionError("matmul: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
    out = Tensor2::zeros(a.rows, b.cols);
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = out.data.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    if (a.rows != b.rows)
        throw DimensionError("matmul_tn: outer dimensions " + a.shape_str() + " vs " + b.shape_str());
    out = Tensor2::zeros(a.cols, b.cols);
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data.data() + i * k;
        const double* brow = b.data.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out.data.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    if (a.cols != b.cols)
        throw DimensionError("matmul_nt: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
    out = Tensor2::zeros(a.rows, b.rows);
    const std::size_t n = a.rows, k = a.cols, m = b.rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = out.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b.data.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
}

Tensor2 hadamard(const Tensor2& a, const Tensor2& b) {
    a.require_same_shape(b, "hadamard");
    Tensor2 out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

} // namespace tabitd
