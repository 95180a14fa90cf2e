#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "tabitd/encoder.hpp"
#include "tabitd/tensor.hpp"

namespace tabitd::explain {

struct ImportanceReport {
    Tensor2 per_step_eta;                  // (B x N_steps) step significance
    Tensor2 m_agg;                         // (B x D) aggregate importance, row-stochastic
    std::vector<double> global_importance; // (D) mean of m_agg over rows
    // Per sample: top-k (feature index, weight), heaviest first, ties toward
    // the lower column index.
    std::vector<std::vector<std::pair<std::size_t, double>>> top_features;
    std::vector<char> degenerate; // rows whose aggregate denominator was zero
    std::size_t degenerate_count = 0;
};

/// η_b = Σ_c ReLU(d_bc): how much one decision step contributes per sample.
/// A step whose d row is entirely non-positive carries zero weight.
std::vector<double> step_importance(const Tensor2& d_i);

/// m_agg[b,j] = Σ_i η_b[i]·M_b,j[i], then row-normalized. A row whose
/// denominator is zero comes back all-zero and is flagged, never NaN.
Tensor2 aggregate_mask(const std::vector<Tensor2>& masks, const Tensor2& etas,
                       std::vector<char>* degenerate = nullptr);

/// Inference-mode forward pass plus importance aggregation and per-sample
/// top-k ranking. Requires 1 <= k <= D. The caller is responsible for only
/// passing supervised-trained models (the CLI gates on the artifact's phase).
ImportanceReport explain(const encoder::TabnetModel& model, const Tensor2& batch, std::size_t k);

} // namespace tabitd::explain
