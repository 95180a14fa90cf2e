#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tabitd/encoder.hpp"
#include "tabitd/tensor.hpp"

namespace tabitd::decoder {

// ---------------------------------------------------------------------------
// Bernoulli feature mask (1 = cell hidden from the encoder, to be predicted)
// ---------------------------------------------------------------------------

struct SelfSupMask {
    Tensor2 s; // entries in {0, 1}
    double p_s = 0.2;
};

SelfSupMask sample_mask(std::size_t b, std::size_t d, double p_s, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Decoder parameters: per-step feature transformer + FC head back to D columns
// ---------------------------------------------------------------------------

struct DecoderParams {
    std::vector<std::vector<encoder::GluBlockParams>> step_blocks; // [n_steps][layers]
    std::vector<nn::ParamBlock> head_w; // [n_steps] (n_d x D)
    std::vector<nn::ParamBlock> head_b; // [n_steps] (1 x D)

    void visit(const std::function<void(nn::ParamBlock&)>& fn);
    void zero_grad();
};

DecoderParams init_decoder_params(const encoder::EncoderConfig& cfg, std::size_t layers,
                                  std::size_t input_dim, std::uint64_t seed);

struct DecoderCache {
    std::vector<encoder::FtCache> ft;
    std::vector<nn::LinearCache> head;
};

/// f̂ = S ⊙ Σ_i head_i(ft_i(d[i])): only masked-out cells are predicted.
Tensor2 decoder_forward(const std::vector<Tensor2>& step_d, DecoderParams& dp, const Tensor2& s,
                        encoder::Mode mode, DecoderCache* cache = nullptr);

/// Returns per-step gradients w.r.t. d[i]; accumulates decoder parameter grads.
std::vector<Tensor2> decoder_backward(const Tensor2& d_fhat, DecoderParams& dp,
                                      const Tensor2& s, const DecoderCache& cache);

// ---------------------------------------------------------------------------
// Eq. 10 reconstruction loss
// ---------------------------------------------------------------------------

/// Population standard deviation per column; a zero-variance column is an
/// error naming the column index.
std::vector<double> population_std_columns(const Tensor2& f);

/// Σ_b Σ_j |(f̂ − f)·S / std_j|² with std taken from f itself.
double reconstruction_loss(const Tensor2& fhat, const Tensor2& f, const Tensor2& s);

/// Same with precomputed per-column std (the pretraining-split statistic).
/// When d_fhat is given it receives dL/df̂ = 2(f̂−f)S/std².
double reconstruction_loss(const Tensor2& fhat, const Tensor2& f, const Tensor2& s,
                           std::span<const double> std_cols, Tensor2* d_fhat = nullptr);

// ---------------------------------------------------------------------------
// Pretraining loop
// ---------------------------------------------------------------------------

struct PretrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 256;
    std::size_t virtual_batch = 128; // input ghost BN chunk
    double learning_rate = 0.02;
    double lr_decay = 0.95; // per epoch
    double p_s = 0.2;
    double holdout_fraction = 0.1;
    std::size_t decoder_layers = 1;

    void validate() const;
};

struct PretrainResult {
    encoder::TabnetParams params;   // best-holdout encoder checkpoint
    DecoderParams decoder;          // matching decoder checkpoint
    std::vector<double> holdout_losses; // per epoch, the tracked trend
    bool diverged = false;          // loss went non-finite; params hold the last finite checkpoint
};

/// Masked-reconstruction pretraining over the feature matrix. Fresh Bernoulli
/// masks every iteration; encoder runs on (1−S)⊙f with P[0] = 1−S.
PretrainResult pretrain(const Tensor2& features, const encoder::EncoderConfig& enc_cfg,
                        const PretrainConfig& cfg, std::uint64_t seed);

} // namespace tabitd::decoder
