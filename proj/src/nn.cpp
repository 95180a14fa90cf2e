#include "tabitd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tabitd/errors.hpp"

namespace tabitd::nn {

// --------------------------------------------------------------------------
// Linear
// --------------------------------------------------------------------------

Tensor2 linear_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b,
                       LinearCache* cache) {
    if (b.rows != 1 || b.cols != w.cols)
        throw DimensionError("linear: bias shape " + b.shape_str() + " does not match weight " +
                             w.shape_str());
    Tensor2 y = matmul(x, w);
    for (std::size_t r = 0; r < y.rows; ++r)
        for (std::size_t c = 0; c < y.cols; ++c) y.at(r, c) += b.at(0, c);
    if (cache) cache->x = x;
    return y;
}

Tensor2 linear_backward(const Tensor2& dy, const LinearCache& cache, const Tensor2& w,
                        Tensor2& dw, Tensor2& db) {
    require_same_shape(dw, w, "linear backward dw");
    if (db.rows != 1 || db.cols != w.cols)
        throw DimensionError("linear backward: db shape " + db.shape_str());
    // dW += x^T.dy
    Tensor2 dw_local = matmul_tn(cache.x, dy);
    dw += dw_local;
    for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t c = 0; c < dy.cols; ++c) db.at(0, c) += dy.at(r, c);
    // dx = dy.W^T
    return matmul_nt(dy, w);
}

// --------------------------------------------------------------------------
// GLU / ReLU
// --------------------------------------------------------------------------

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor2 glu_forward(const Tensor2& x, GluCache* cache) {
    Tensor2 y(x.rows, x.cols);
    Tensor2 sig(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        sig.data[i] = sigmoid(x.data[i]);
        y.data[i] = x.data[i] * sig.data[i];
    }
    if (cache) {
        cache->x = x;
        cache->sig = std::move(sig);
    }
    return y;
}

Tensor2 glu_backward(const Tensor2& dy, const GluCache& cache) {
    require_same_shape(dy, cache.x, "glu backward");
    Tensor2 dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
        double s = cache.sig.data[i];
        dx.data[i] = dy.data[i] * (s + cache.x.data[i] * s * (1.0 - s));
    }
    return dx;
}

Tensor2 relu_forward(const Tensor2& x, ReluCache* cache) {
    Tensor2 y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    if (cache) cache->x = x;
    return y;
}

Tensor2 relu_backward(const Tensor2& dy, const ReluCache& cache) {
    require_same_shape(dy, cache.x, "relu backward");
    Tensor2 dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        dx.data[i] = cache.x.data[i] > 0.0 ? dy.data[i] : 0.0;
    return dx;
}

// --------------------------------------------------------------------------
// Batch normalization
// --------------------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> ghost_chunks(std::size_t rows,
                                                              std::size_t virtual_batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (virtual_batch == 0 || virtual_batch >= rows) {
        out.emplace_back(0, rows);
        return out;
    }
    std::size_t begin = 0;
    while (begin < rows) {
        std::size_t end = std::min(begin + virtual_batch, rows);
        // A trailing single row folds into the previous chunk.
        if (rows - end == 1) end = rows;
        out.emplace_back(begin, end);
        begin = end;
    }
    return out;
}

Tensor2 batch_norm_train(const Tensor2& x, BnStats& stats, std::size_t virtual_batch,
                         BnCache* cache) {
    if (x.cols != stats.running_mean.size())
        throw DimensionError("batch norm: input has " + std::to_string(x.cols) +
                             " columns, stats track " + std::to_string(stats.running_mean.size()));
    if (x.rows < 2)
        throw NumericError("batch norm: train-mode batch of " + std::to_string(x.rows) +
                           " row(s) is degenerate");
    auto spans = ghost_chunks(x.rows, virtual_batch);
    Tensor2 y(x.rows, x.cols);
    if (cache) {
        cache->x_hat = Tensor2(x.rows, x.cols);
        cache->chunks.clear();
    }
    for (auto [begin, end] : spans) {
        std::size_t n = end - begin;
        if (n < 2)
            throw NumericError("batch norm: virtual batch of 1 row is degenerate");
        BnChunk chunk;
        chunk.begin = begin;
        chunk.end = end;
        chunk.inv_std.resize(x.cols);
        for (std::size_t c = 0; c < x.cols; ++c) {
            double mean = 0.0;
            for (std::size_t r = begin; r < end; ++r) mean += x.at(r, c);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t r = begin; r < end; ++r) {
                double d = x.at(r, c) - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            double inv = 1.0 / std::sqrt(var + stats.eps);
            chunk.inv_std[c] = inv;
            for (std::size_t r = begin; r < end; ++r) {
                double xh = (x.at(r, c) - mean) * inv;
                y.at(r, c) = xh;
                if (cache) cache->x_hat.at(r, c) = xh;
            }
            stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] +
                                    stats.momentum * mean;
            stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] +
                                   stats.momentum * var;
        }
        if (cache) cache->chunks.push_back(std::move(chunk));
    }
    return y;
}

Tensor2 batch_norm_infer(const Tensor2& x, const BnStats& stats) {
    if (x.cols != stats.running_mean.size())
        throw DimensionError("batch norm: input has " + std::to_string(x.cols) +
                             " columns, stats track " + std::to_string(stats.running_mean.size()));
    Tensor2 y(x.rows, x.cols);
    std::vector<double> inv(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c)
        inv[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c)
            y.at(r, c) = (x.at(r, c) - stats.running_mean[c]) * inv[c];
    return y;
}

Tensor2 batch_norm_backward(const Tensor2& dy, const BnCache& cache) {
    require_same_shape(dy, cache.x_hat, "batch norm backward");
    Tensor2 dx(dy.rows, dy.cols);
    for (const BnChunk& chunk : cache.chunks) {
        double n = static_cast<double>(chunk.end - chunk.begin);
        for (std::size_t c = 0; c < dy.cols; ++c) {
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (std::size_t r = chunk.begin; r < chunk.end; ++r) {
                sum_dy += dy.at(r, c);
                sum_dy_xhat += dy.at(r, c) * cache.x_hat.at(r, c);
            }
            double inv = chunk.inv_std[c];
            for (std::size_t r = chunk.begin; r < chunk.end; ++r) {
                dx.at(r, c) = inv / n *
                              (n * dy.at(r, c) - sum_dy - cache.x_hat.at(r, c) * sum_dy_xhat);
            }
        }
    }
    return dx;
}

// --------------------------------------------------------------------------
// Sparsemax
// --------------------------------------------------------------------------

std::vector<double> sparsemax(std::span<const double> z) {
    if (z.empty()) throw DimensionError("sparsemax: empty input");
    std::vector<double> sorted(z.begin(), z.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0;
    double tau = 0.0;
    std::size_t k_max = 0;
    double cumsum_at_k = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumsum += sorted[j];
        double k = static_cast<double>(j + 1);
        if (1.0 + k * sorted[j] > cumsum) {
            k_max = j + 1;
            cumsum_at_k = cumsum;
        }
    }
    tau = (cumsum_at_k - 1.0) / static_cast<double>(k_max);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
    return p;
}

Tensor2 sparsemax_rows(const Tensor2& z, SparsemaxCache* cache) {
    Tensor2 p(z.rows, z.cols);
    if (cache) {
        cache->support.assign(z.rows * z.cols, 0);
        cache->support_size.assign(z.rows, 0);
    }
    for (std::size_t r = 0; r < z.rows; ++r) {
        auto out = sparsemax(z.row(r));
        for (std::size_t c = 0; c < z.cols; ++c) {
            p.at(r, c) = out[c];
            if (cache && out[c] > 0.0) {
                cache->support[r * z.cols + c] = 1;
                ++cache->support_size[r];
            }
        }
    }
    return p;
}

Tensor2 sparsemax_backward(const Tensor2& dy, const SparsemaxCache& cache) {
    if (dy.rows != cache.support_size.size() || dy.rows * dy.cols != cache.support.size())
        throw DimensionError("sparsemax backward: cache does not match gradient shape");
    Tensor2 dz(dy.rows, dy.cols);
    for (std::size_t r = 0; r < dy.rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < dy.cols; ++c)
            if (cache.support[r * dy.cols + c]) sum += dy.at(r, c);
        double mean = sum / static_cast<double>(cache.support_size[r]);
        for (std::size_t c = 0; c < dy.cols; ++c)
            dz.at(r, c) = cache.support[r * dy.cols + c] ? dy.at(r, c) - mean : 0.0;
    }
    return dz;
}

double sparsemax_boundary_gap(std::span<const double> z) {
    if (z.empty()) throw DimensionError("sparsemax: empty input");
    std::vector<double> sorted(z.begin(), z.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumsum += sorted[j];
        double k = static_cast<double>(j + 1);
        gap = std::min(gap, std::abs(1.0 + k * sorted[j] - cumsum));
    }
    return gap;
}

// --------------------------------------------------------------------------
// Softmax / cross entropy
// --------------------------------------------------------------------------

Tensor2 softmax_rows(const Tensor2& logits) {
    Tensor2 p(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double m = logits.at(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, logits.at(r, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            double e = std::exp(logits.at(r, c) - m);
            p.at(r, c) = e;
            denom += e;
        }
        for (std::size_t c = 0; c < logits.cols; ++c) p.at(r, c) /= denom;
    }
    return p;
}

double cross_entropy(const Tensor2& logits, std::span<const int> labels, Tensor2* d_logits) {
    if (labels.size() != logits.rows)
        throw DimensionError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(logits.rows) + " rows");
    double loss = 0.0;
    Tensor2 probs = softmax_rows(logits);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw DimensionError("cross entropy: label " + std::to_string(y) + " out of range");
        double m = logits.at(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, logits.at(r, c));
        double lse = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) lse += std::exp(logits.at(r, c) - m);
        lse = m + std::log(lse);
        loss += lse - logits.at(r, static_cast<std::size_t>(y));
    }
    double b = static_cast<double>(logits.rows);
    loss /= b;
    if (d_logits) {
        *d_logits = probs;
        for (std::size_t r = 0; r < logits.rows; ++r)
            d_logits->at(r, static_cast<std::size_t>(labels[r])) -= 1.0;
        for (double& v : d_logits->data) v /= b;
    }
    return loss;
}

// --------------------------------------------------------------------------
// Adam
// --------------------------------------------------------------------------

Adam::Adam(std::vector<ParamBlock*> blocks, double lr, double beta1, double beta2, double eps)
    : blocks_(std::move(blocks)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr_ > 0.0)) throw ConfigError("adam: learning rate must be positive");
    m_.reserve(blocks_.size());
    v_.reserve(blocks_.size());
    for (ParamBlock* p : blocks_) {
        m_.emplace_back(p->value.rows, p->value.cols);
        v_.emplace_back(p->value.rows, p->value.cols);
    }
}

void Adam::step() {
    ++t_;
    double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        ParamBlock& p = *blocks_[i];
        for (std::size_t k = 0; k < p.value.data.size(); ++k) {
            double g = p.grad.data[k];
            double& m = m_[i].data[k];
            double& v = v_[i].data[k];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g * g;
            double m_hat = m / bias1;
            double v_hat = v / bias2;
            p.value.data[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

// --------------------------------------------------------------------------
// Gradient checking
// --------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x0,
                           std::span<const double> analytic,
                           double step,
                           const std::function<bool(std::size_t)>& skip) {
    if (step < 1e-7 || step > 1e-3)
        throw ConfigError("grad_check: step " + std::to_string(step) +
                          " outside [1e-7, 1e-3]");
    if (x0.size() != analytic.size())
        throw DimensionError("grad_check: gradient length does not match point length");
    std::vector<double> x(x0.begin(), x0.end());
    GradCheckResult res;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (skip && skip(i)) {
            ++res.skipped;
            continue;
        }
        double saved = x[i];
        x[i] = saved + step;
        double f_plus = f(x);
        x[i] = saved - step;
        double f_minus = f(x);
        x[i] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw NumericError("grad_check: non-finite loss during finite-difference probe");
        double numeric = (f_plus - f_minus) / (2.0 * step);
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        double rel = std::abs(analytic[i] - numeric) / denom;
        ++res.checked;
        if (rel > res.max_rel) {
            res.max_rel = rel;
            res.worst_index = i;
            res.analytic_at_worst = analytic[i];
            res.numeric_at_worst = numeric;
        }
    }
    return res;
}

} // namespace tabitd::nn
