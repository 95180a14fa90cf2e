#include "tabitd/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tabitd/errors.hpp"
#include "tabitd/rng.hpp"

namespace tabitd::decoder {

using encoder::EncoderConfig;
using encoder::GluBlockParams;
using encoder::Mode;
using encoder::TabnetModel;

namespace {

std::vector<GluBlockParams>& no_shared_blocks() {
    static std::vector<GluBlockParams> empty;
    return empty;
}

void check_binary_mask(const Tensor2& s) {
    for (double v : s.data)
        if (v != 0.0 && v != 1.0)
            throw ConfigError("self-supervised mask entries must be 0 or 1");
}

} // namespace

// ---------------------------------------------------------------------------
// Mask sampling
// ---------------------------------------------------------------------------

SelfSupMask sample_mask(std::size_t b, std::size_t d, double p_s, std::uint64_t seed) {
    if (!(p_s > 0.0 && p_s < 1.0))
        throw ConfigError("p_s must be in (0, 1), got " + std::to_string(p_s));
    if (b == 0 || d == 0) throw DimensionError("sample_mask: empty shape");
    SelfSupMask m;
    m.p_s = p_s;
    m.s = Tensor2(b, d);
    rng::Engine eng(seed);
    for (double& v : m.s.data) v = eng.bernoulli(p_s) ? 1.0 : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Decoder parameters
// ---------------------------------------------------------------------------

void DecoderParams::visit(const std::function<void(nn::ParamBlock&)>& fn) {
    for (std::size_t i = 0; i < step_blocks.size(); ++i) {
        for (auto& blk : step_blocks[i]) {
            fn(blk.w);
            fn(blk.b);
        }
        fn(head_w[i]);
        fn(head_b[i]);
    }
}

void DecoderParams::zero_grad() {
    visit([](nn::ParamBlock& p) { p.zero_grad(); });
}

DecoderParams init_decoder_params(const EncoderConfig& cfg, std::size_t layers,
                                  std::size_t input_dim, std::uint64_t seed) {
    cfg.validate();
    if (layers < 1) throw ConfigError("decoder needs at least one block per step");
    DecoderParams dp;
    dp.step_blocks.resize(cfg.n_steps);
    for (auto& step : dp.step_blocks)
        for (std::size_t j = 0; j < layers; ++j) {
            GluBlockParams blk;
            blk.w = nn::ParamBlock(cfg.n_d, cfg.n_d);
            blk.b = nn::ParamBlock(1, cfg.n_d);
            blk.bn = nn::BnStats(cfg.n_d, cfg.bn_momentum, cfg.bn_eps);
            step.push_back(std::move(blk));
        }
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        dp.head_w.emplace_back(cfg.n_d, input_dim);
        dp.head_b.emplace_back(1, input_dim);
    }
    rng::Engine eng(rng::derive_seed(seed, "decoder-init"));
    auto init_weight = [&](nn::ParamBlock& w) {
        double scale = std::sqrt(2.0 / static_cast<double>(w.value.rows + w.value.cols));
        for (double& v : w.value.data) v = eng.normal(0.0, scale);
    };
    for (auto& step : dp.step_blocks)
        for (auto& blk : step) init_weight(blk.w);
    for (auto& w : dp.head_w) init_weight(w);
    return dp;
}

// ---------------------------------------------------------------------------
// Decoder forward / backward
// ---------------------------------------------------------------------------

Tensor2 decoder_forward(const std::vector<Tensor2>& step_d, DecoderParams& dp, const Tensor2& s,
                        Mode mode, DecoderCache* cache) {
    if (step_d.empty()) throw DimensionError("decoder: no step representations");
    if (step_d.size() != dp.head_w.size())
        throw DimensionError("decoder: " + std::to_string(step_d.size()) +
                             " steps for " + std::to_string(dp.head_w.size()) + " heads");
    check_binary_mask(s);
    Tensor2 sum(s.rows, s.cols);
    if (cache) {
        cache->ft.assign(step_d.size(), {});
        cache->head.assign(step_d.size(), {});
    }
    for (std::size_t i = 0; i < step_d.size(); ++i) {
        Tensor2 z = encoder::feature_transform(step_d[i], no_shared_blocks(), dp.step_blocks[i],
                                               mode, cache ? &cache->ft[i] : nullptr);
        Tensor2 o = nn::linear_forward(z, dp.head_w[i].value, dp.head_b[i].value,
                                       cache ? &cache->head[i] : nullptr);
        require_same_shape(o, sum, "decoder head output");
        sum += o;
    }
    return hadamard(sum, s);
}

std::vector<Tensor2> decoder_backward(const Tensor2& d_fhat, DecoderParams& dp,
                                      const Tensor2& s, const DecoderCache& cache) {
    if (cache.head.size() != dp.head_w.size())
        throw DimensionError("decoder backward: cache does not match parameters");
    Tensor2 d_sum = hadamard(d_fhat, s);
    std::vector<Tensor2> d_steps(dp.head_w.size());
    for (std::size_t i = 0; i < dp.head_w.size(); ++i) {
        Tensor2 d_z = nn::linear_backward(d_sum, cache.head[i], dp.head_w[i].value,
                                          dp.head_w[i].grad, dp.head_b[i].grad);
        d_steps[i] = encoder::feature_transform_backward(d_z, no_shared_blocks(),
                                                         dp.step_blocks[i], cache.ft[i]);
    }
    return d_steps;
}

// ---------------------------------------------------------------------------
// Eq. 10
// ---------------------------------------------------------------------------

std::vector<double> population_std_columns(const Tensor2& f) {
    if (f.rows == 0 || f.cols == 0) throw DimensionError("population std of an empty matrix");
    std::vector<double> out(f.cols);
    for (std::size_t c = 0; c < f.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < f.rows; ++r) mean += f.at(r, c);
        mean /= static_cast<double>(f.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < f.rows; ++r) {
            double d = f.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(f.rows);
        if (!(var > 0.0))
            throw NumericError("column " + std::to_string(c) +
                               " has zero variance; the reconstruction loss is undefined");
        out[c] = std::sqrt(var);
    }
    return out;
}

double reconstruction_loss(const Tensor2& fhat, const Tensor2& f, const Tensor2& s) {
    auto stds = population_std_columns(f);
    return reconstruction_loss(fhat, f, s, stds, nullptr);
}

double reconstruction_loss(const Tensor2& fhat, const Tensor2& f, const Tensor2& s,
                           std::span<const double> std_cols, Tensor2* d_fhat) {
    require_same_shape(fhat, f, "reconstruction loss");
    require_same_shape(fhat, s, "reconstruction loss mask");
    if (std_cols.size() != f.cols)
        throw DimensionError("reconstruction loss: std vector length mismatch");
    for (double sd : std_cols)
        if (!(sd > 0.0)) throw ConfigError("reconstruction loss: std entries must be positive");
    check_binary_mask(s);
    if (d_fhat) *d_fhat = Tensor2(f.rows, f.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < f.rows; ++r)
        for (std::size_t c = 0; c < f.cols; ++c) {
            double term = (fhat.at(r, c) - f.at(r, c)) * s.at(r, c) / std_cols[c];
            loss += term * term;
            if (d_fhat)
                d_fhat->at(r, c) = 2.0 * (fhat.at(r, c) - f.at(r, c)) * s.at(r, c) /
                                   (std_cols[c] * std_cols[c]);
        }
    return loss;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

void PretrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("pretrain: batch_size must be >= 2 (train-mode BN)");
    if (!(learning_rate > 0.0)) throw ConfigError("pretrain: learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("pretrain: lr_decay in (0, 1]");
    if (!(p_s > 0.0 && p_s < 1.0)) throw ConfigError("pretrain: p_s must be in (0, 1)");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("pretrain: holdout_fraction must be in (0, 1)");
    if (decoder_layers < 1) throw ConfigError("pretrain: decoder_layers must be >= 1");
}

namespace {

Tensor2 gather(const Tensor2& f, const std::vector<std::size_t>& rows, std::size_t begin,
               std::size_t end) {
    Tensor2 out(end - begin, f.cols);
    for (std::size_t i = begin; i < end; ++i) {
        auto src = f.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i - begin).begin());
    }
    return out;
}

/// x = (1−S)⊙f; the same (1−S) matrix serves as P[0].
std::pair<Tensor2, Tensor2> masked_input(const Tensor2& f, const Tensor2& s) {
    Tensor2 inv(s.rows, s.cols);
    for (std::size_t i = 0; i < s.data.size(); ++i) inv.data[i] = 1.0 - s.data[i];
    return {hadamard(inv, f), inv};
}

} // namespace

PretrainResult pretrain(const Tensor2& features, const EncoderConfig& enc_cfg,
                        const PretrainConfig& cfg, std::uint64_t seed) {
    enc_cfg.validate();
    cfg.validate();
    if (features.rows == 0) throw EmptyDatasetError("pretrain: empty dataset");
    if (features.rows < 4)
        throw ConfigError("pretrain: need at least 4 rows for a train/holdout split");

    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    auto stds = population_std_columns(features); // Eq. 10 denominator, full-split statistic

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Engine hold_eng(rng::derive_seed(seed, "pretrain-holdout"));
    hold_eng.shuffle(order);
    auto n_hold = static_cast<std::size_t>(
        std::floor(cfg.holdout_fraction * static_cast<double>(n) + 0.5));
    n_hold = std::clamp<std::size_t>(n_hold, 1, n - 2);
    Tensor2 holdout = gather(features, order, 0, n_hold);
    Tensor2 train = gather(features, order, n_hold, n);

    TabnetModel model(enc_cfg, d, rng::derive_seed(seed, "pretrain-model"));
    DecoderParams dec =
        init_decoder_params(enc_cfg, cfg.decoder_layers, d, rng::derive_seed(seed, "pretrain"));

    std::vector<nn::ParamBlock*> blocks;
    model.params.visit([&](nn::ParamBlock& p) { blocks.push_back(&p); });
    dec.visit([&](nn::ParamBlock& p) { blocks.push_back(&p); });
    nn::Adam opt(blocks, cfg.learning_rate);

    SelfSupMask hold_mask =
        sample_mask(holdout.rows, d, cfg.p_s, rng::derive_seed(seed, "pretrain-holdout-mask"));

    auto holdout_loss = [&]() {
        auto [x, inv] = masked_input(holdout, hold_mask.s);
        auto out = model.forward_infer(x, &inv);
        std::vector<Tensor2> dvec;
        dvec.reserve(out.steps.size());
        for (auto& st : out.steps) dvec.push_back(st.d);
        Tensor2 fhat = decoder_forward(dvec, dec, hold_mask.s, Mode::infer, nullptr);
        return reconstruction_loss(fhat, holdout, hold_mask.s, stds) /
               static_cast<double>(holdout.rows);
    };

    PretrainResult res;
    res.params = model.params; // epoch-0 fallback checkpoint
    res.decoder = dec;
    double best = std::numeric_limits<double>::infinity();
    std::uint64_t mask_counter = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
        opt.set_lr(cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch)));
        std::vector<std::size_t> perm(train.rows);
        std::iota(perm.begin(), perm.end(), 0);
        rng::Engine eng(rng::derive_seed(seed, "pretrain-epoch", epoch));
        eng.shuffle(perm);
        try {
            for (auto [lo, hi] : nn::ghost_chunks(train.rows, cfg.batch_size)) {
                Tensor2 fb = gather(train, perm, lo, hi);
                SelfSupMask s = sample_mask(fb.rows, d, cfg.p_s,
                                            rng::derive_seed(seed, "pretrain-mask",
                                                             mask_counter++));
                auto [x, inv] = masked_input(fb, s.s);
                encoder::EncoderTape tape;
                auto out = model.forward(x, cfg.virtual_batch, &tape, &inv);
                std::vector<Tensor2> dvec;
                dvec.reserve(out.steps.size());
                for (auto& st : out.steps) dvec.push_back(st.d);
                DecoderCache dc;
                Tensor2 fhat = decoder_forward(dvec, dec, s.s, Mode::train, &dc);
                Tensor2 d_fhat;
                double loss = reconstruction_loss(fhat, fb, s.s, stds, &d_fhat) /
                              static_cast<double>(fb.rows);
                if (!std::isfinite(loss)) {
                    res.diverged = true;
                    break;
                }
                for (double& v : d_fhat.data) v /= static_cast<double>(fb.rows);
                model.zero_grad();
                dec.zero_grad();
                auto d_steps = decoder_backward(d_fhat, dec, s.s, dc);
                encoder::EncoderBackwardSignals sig;
                sig.d_step_d = &d_steps;
                model.backward(tape, sig);
                opt.step();
            }
        } catch (const NumericError&) {
            res.diverged = true; // overflow inside a forward pass
        }
        if (res.diverged) break;
        double hl = holdout_loss();
        if (!std::isfinite(hl)) {
            res.diverged = true;
            break;
        }
        res.holdout_losses.push_back(hl);
        if (hl < best) {
            best = hl;
            res.params = model.params;
            res.decoder = dec;
        }
    }
    return res;
}

} // namespace tabitd::decoder
