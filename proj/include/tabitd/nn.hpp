#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tabitd/tensor.hpp"

namespace tabitd::nn {

/// One learnable tensor plus its accumulated gradient.
struct ParamBlock {
    Tensor2 value;
    Tensor2 grad;

    ParamBlock() = default;
    ParamBlock(std::size_t rows, std::size_t cols)
        : value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.fill(0.0); }
};

// ---------------------------------------------------------------------------
// Linear: y = x.W + b, with W shaped (in, out) and b shaped (1, out).
// ---------------------------------------------------------------------------

struct LinearCache {
    Tensor2 x; // input saved for dW = x^T.dy
};

Tensor2 linear_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b,
                       LinearCache* cache = nullptr);
/// Accumulates into dw/db, returns dx.
Tensor2 linear_backward(const Tensor2& dy, const LinearCache& cache, const Tensor2& w,
                        Tensor2& dw, Tensor2& db);

// ---------------------------------------------------------------------------
// GLU: y = x * sigmoid(x), elementwise.
// ---------------------------------------------------------------------------

struct GluCache {
    Tensor2 x;
    Tensor2 sig; // sigmoid(x), reused by backward
};

double sigmoid(double x);
Tensor2 glu_forward(const Tensor2& x, GluCache* cache = nullptr);
Tensor2 glu_backward(const Tensor2& dy, const GluCache& cache);

// ---------------------------------------------------------------------------
// ReLU.
// ---------------------------------------------------------------------------

struct ReluCache {
    Tensor2 x;
};

Tensor2 relu_forward(const Tensor2& x, ReluCache* cache = nullptr);
Tensor2 relu_backward(const Tensor2& dy, const ReluCache& cache);

// ---------------------------------------------------------------------------
// Batch normalization without learned affine parameters:
//   train: y = (x - mean_B) / sqrt(var_B + eps), population variance
//   infer: y = (x - running_mean) / sqrt(running_var + eps)
// Ghost variant normalizes fixed-size virtual chunks independently; a trailing
// chunk of size one is folded into its predecessor so no chunk degenerates.
// ---------------------------------------------------------------------------

struct BnStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.01;
    double eps = 1e-5;

    explicit BnStats(std::size_t dim = 0, double momentum_ = 0.01, double eps_ = 1e-5)
        : running_mean(dim, 0.0), running_var(dim, 1.0), momentum(momentum_), eps(eps_) {}
};

struct BnChunk {
    std::size_t begin = 0;
    std::size_t end = 0;            // one past last row
    std::vector<double> inv_std;    // per column
};

struct BnCache {
    Tensor2 x_hat;                  // normalized output (train mode)
    std::vector<BnChunk> chunks;
};

/// Train-mode forward. virtual_batch == 0 means one chunk over the whole batch.
/// Updates running stats chunk by chunk. Throws NumericError when a chunk would
/// have a single row and cannot be folded (batch size 1).
Tensor2 batch_norm_train(const Tensor2& x, BnStats& stats, std::size_t virtual_batch = 0,
                         BnCache* cache = nullptr);
Tensor2 batch_norm_infer(const Tensor2& x, const BnStats& stats);
Tensor2 batch_norm_backward(const Tensor2& dy, const BnCache& cache);

/// Splits rows into virtual-batch chunks per the folding rule, for reuse in tests.
std::vector<std::pair<std::size_t, std::size_t>> ghost_chunks(std::size_t rows,
                                                              std::size_t virtual_batch);

// ---------------------------------------------------------------------------
// Sparsemax (Euclidean projection of z onto the probability simplex).
// ---------------------------------------------------------------------------

struct SparsemaxCache {
    // support[i] true where output > 0; support_size per row
    std::vector<char> support;      // rows*cols
    std::vector<std::size_t> support_size;
};

/// Single-vector closed form: sort descending, find threshold tau, clip.
std::vector<double> sparsemax(std::span<const double> z);
/// Row-wise over a batch; fills cache for backward when given.
Tensor2 sparsemax_rows(const Tensor2& z, SparsemaxCache* cache = nullptr);
/// dz_i = dy_i - mean(dy over support) on support, 0 elsewhere.
Tensor2 sparsemax_backward(const Tensor2& dy, const SparsemaxCache& cache);

/// Smallest |1 + k z_(k) - cumsum_k| over all prefixes: how close z sits to a
/// support-change boundary. Finite-difference probes skip points where this is
/// below the probe step.
double sparsemax_boundary_gap(std::span<const double> z);

// ---------------------------------------------------------------------------
// Softmax + cross entropy (training loss head).
// ---------------------------------------------------------------------------

Tensor2 softmax_rows(const Tensor2& logits);
/// Mean cross entropy over the batch; d_logits = (softmax - onehot) / B when requested.
double cross_entropy(const Tensor2& logits, std::span<const int> labels,
                     Tensor2* d_logits = nullptr);

// ---------------------------------------------------------------------------
// Adam optimizer over externally owned ParamBlocks.
// ---------------------------------------------------------------------------

class Adam {
public:
    explicit Adam(std::vector<ParamBlock*> blocks, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    /// One update from the gradients currently accumulated in the blocks.
    void step();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    std::vector<ParamBlock*> blocks_;
    std::vector<Tensor2> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

/// Central differences against an analytic gradient. step must be in
/// [1e-7, 1e-3]. skip(i) lets callers exclude coordinates near kinks.
/// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x0,
                           std::span<const double> analytic,
                           double step,
                           const std::function<bool(std::size_t)>& skip = nullptr);

} // namespace tabitd::nn
