#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tabitd/nn.hpp"
#include "tabitd/tensor.hpp"

namespace tabitd::encoder {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EncoderConfig {
    std::size_t n_steps = 3;
    std::size_t n_d = 16;
    std::size_t n_a = 16;
    double gamma = 1.3;          // prior relaxation
    double lambda_sparse = 1e-3; // weight of the mask-entropy term in the loss
    std::size_t shared_layers = 2;
    std::size_t step_layers = 2;
    double eps_sparse = 1e-15; // inside log(M + eps)
    double bn_momentum = 0.01;
    double bn_eps = 1e-5;
    std::size_t n_classes = 7;
    bool final_bias = false; // the output head is a pure linear map by default

    void validate() const;
    std::size_t hidden_width() const { return n_d + n_a; }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One FC -> BN -> GLU block.
struct GluBlockParams {
    nn::ParamBlock w; // (in x hidden)
    nn::ParamBlock b; // (1 x hidden)
    nn::BnStats bn;
};

/// Attentive transformer for one step: FC -> BN, then prior scaling + sparsemax.
struct AttentiveParams {
    nn::ParamBlock w; // (n_a x D)
    nn::ParamBlock b; // (1 x D)
    nn::BnStats bn;
};

struct TabnetParams {
    nn::BnStats input_bn;                        // over the D input features (ghost)
    std::vector<GluBlockParams> shared;          // reused by every feature transformer
    /// Running BN statistics for the shared blocks, one set per usage
    /// ([n_steps+1][shared_layers]): the same weights see a different input
    /// distribution in the initial transformer and in every decision step, so
    /// a single blended average would match none of them at inference. The
    /// shared blocks' embedded stats are unused by the encoder.
    std::vector<std::vector<nn::BnStats>> shared_stats;
    std::vector<std::vector<GluBlockParams>> step_blocks; // [n_steps+1] entries; 0 = initial
    std::vector<AttentiveParams> attentive;      // [n_steps]
    nn::ParamBlock w_final;                      // (n_d x n_classes)
    nn::ParamBlock b_final;                      // (1 x n_classes), used only if final_bias

    /// Stable traversal order shared by init, the optimizer, and serialization.
    void visit(const std::function<void(nn::ParamBlock&)>& fn);
    void visit(const std::function<void(const nn::ParamBlock&)>& fn) const;
    void visit_bn(const std::function<void(nn::BnStats&)>& fn);
    void visit_bn(const std::function<void(const nn::BnStats&)>& fn) const;
    void zero_grad();
};

TabnetParams init_params(const EncoderConfig& cfg, std::size_t input_dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Outputs and tapes
// ---------------------------------------------------------------------------

struct StepState {
    Tensor2 prior; // P[i]  (B x D)
    Tensor2 mask;  // M[i]  (B x D)
    Tensor2 a;     // (B x n_a)
    Tensor2 d;     // (B x n_d), pre-ReLU
};

struct EncoderOutput {
    Tensor2 logits; // (B x n_classes)
    Tensor2 d_out;  // (B x n_d), sum of ReLU(d[i])
    std::vector<StepState> steps;
    double l_sparse = 0.0; // unweighted mask-entropy term
};

struct GluBlockCache {
    nn::LinearCache lin;
    nn::BnCache bn;
    nn::GluCache glu;
    bool residual = false;
};

struct FtCache {
    std::vector<GluBlockCache> blocks;
};

struct StepTape {
    Tensor2 prior_in;   // P[i-1]
    nn::LinearCache att_lin;
    nn::BnCache att_bn;
    Tensor2 att_h;      // BN(FC(a[i-1]))
    nn::SparsemaxCache sm;
    Tensor2 mask;       // M[i]
    FtCache ft;
    nn::ReluCache relu; // over d[i] for the Eq. 7 aggregation
};

struct EncoderTape {
    Tensor2 bn_f; // normalized input features
    nn::BnCache input_bn;
    FtCache ft0;
    std::vector<StepTape> steps;
    nn::LinearCache final_lin;
    std::size_t batch = 0;
};

/// Loss-side gradients fed into the encoder backward pass.
struct EncoderBackwardSignals {
    const Tensor2* d_logits = nullptr;             // (B x n_classes)
    const std::vector<Tensor2>* d_step_d = nullptr; // per-step (B x n_d), w.r.t. raw d[i]
    double lambda_sparse = 0.0;                    // weight applied to dL_sparse/dM
};

// ---------------------------------------------------------------------------
// Free helpers (unit-testable pieces of the forward pass)
// ---------------------------------------------------------------------------

enum class Mode { train, infer };

/// M[i] = sparsemax_rowwise(prior ⊙ BN(FC(a_prev))). Train mode updates the
/// BN running stats and fills the tape.
Tensor2 attentive_transform(const Tensor2& a_prev, const Tensor2& prior, AttentiveParams& p,
                            Mode mode, StepTape* tape);

/// P[i] = P[i-1] ⊙ (γ − M[i]).
Tensor2 update_prior(const Tensor2& prior, const Tensor2& mask, double gamma);

/// Runs the shared + step-specific FC->BN->GLU blocks with √0.5 residuals from
/// the second block on; returns the (B x n_d+n_a) activation. shared_bn, when
/// given, supplies the per-usage running statistics for the shared blocks
/// (one per shared layer); otherwise each block's embedded stats are used.
Tensor2 feature_transform(const Tensor2& in, std::vector<GluBlockParams>& shared,
                          std::vector<GluBlockParams>& step, Mode mode, FtCache* cache,
                          std::vector<nn::BnStats>* shared_bn = nullptr);

/// Reverse pass of feature_transform; accumulates into the blocks' grads and
/// returns the gradient w.r.t. the input.
Tensor2 feature_transform_backward(const Tensor2& d_out, std::vector<GluBlockParams>& shared,
                                   std::vector<GluBlockParams>& step, const FtCache& cache);

/// Eq. 3: Σ_i Σ_b Σ_j −M·log(M+ε) / (N_steps · B).
double sparsity_loss(const std::vector<StepState>& steps, double eps);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class TabnetModel {
public:
    TabnetModel() = default;
    TabnetModel(EncoderConfig cfg, std::size_t input_dim, std::uint64_t seed);

    /// Training-mode forward: batch statistics in every BN, running stats
    /// updated, tape filled when given. prior0 overrides P[0] (self-supervised
    /// masking); default is all-ones. virtual_batch applies to the input BN
    /// only (0 = whole batch).
    EncoderOutput forward(const Tensor2& x, std::size_t virtual_batch = 0,
                          EncoderTape* tape = nullptr, const Tensor2* prior0 = nullptr);

    /// Inference-mode forward: running statistics, no state mutation.
    EncoderOutput forward_infer(const Tensor2& x, const Tensor2* prior0 = nullptr) const;

    /// Accumulates parameter gradients; returns dL/dx.
    Tensor2 backward(const EncoderTape& tape, const EncoderBackwardSignals& sig);

    void zero_grad() { params.zero_grad(); }

    EncoderConfig cfg;
    TabnetParams params;
    std::size_t input_dim = 0;
};

} // namespace tabitd::encoder
