#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tabitd/decoder.hpp"
#include "tabitd/encoder.hpp"
#include "tabitd/fusion.hpp"
#include "tabitd/metrics.hpp"
#include "tabitd/tensor.hpp"

namespace tabitd::training {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 256;
    std::size_t virtual_batch = 128; // input ghost BN chunk; must be <= batch_size
    double learning_rate = 0.02;
    double lr_decay = 0.95; // multiplicative, per epoch
    double lambda_sparse = 1e-3;
    std::uint64_t seed = 1;
    std::size_t early_stop_patience = 10;
    /// Stratified slice carved from the training data for checkpoint selection
    /// (best validation macro-F1). 0 disables validation: the last epoch wins.
    double val_fraction = 0.1;
    std::optional<fusion::ResampleSpec> resample;
    encoder::EncoderConfig encoder;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;   // 1-based
    double train_loss = 0.0; // mean CE + lambda*L_sparse over the epoch
    double val_macro_f1 = -1.0; // -1 when validation is disabled
    double lr = 0.0;
};

struct TrainResult {
    encoder::TabnetModel model; // best-validation checkpoint
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0; // 1-based; 0 only if diverged before finishing epoch 1
    bool early_stopped = false;
    bool diverged = false;
    std::string divergence_info; // learning rate, step, offending batch id
};

/// Supervised training: mean cross-entropy over softmaxed logits plus
/// lambda_sparse times the mask-entropy term, minimized by Adam with
/// per-epoch exponential learning-rate decay. Deterministic given cfg.seed.
/// Resampling (when configured) applies to the training slice only, after the
/// validation slice is carved out. A non-finite loss stops training at the
/// last finite checkpoint with diverged=true and diagnostics filled in.
TrainResult train(const fusion::FusedDataset& data, const TrainConfig& cfg,
                  const encoder::TabnetParams* warm_start = nullptr);

/// argmax of softmaxed logits, ties toward the lowest class index.
/// Probability rows sum to 1 within 1e-9. Width mismatch -> SchemaError.
/// Inference chunks may be scored on several threads (TABITD_THREADS caps
/// them); the math is row-independent so results are bitwise identical.
std::pair<std::vector<fusion::ThreatClass>, Tensor2> predict(const encoder::TabnetModel& model,
                                                             const Tensor2& features);

metrics::MetricsReport evaluate(const encoder::TabnetModel& model,
                                const fusion::FusedDataset& data);

/// Resolved thread budget: min(hardware, TABITD_THREADS when set).
std::size_t thread_budget();

} // namespace tabitd::training
