#include "tabitd/encoder.hpp"

#include <cmath>
#include <string>

#include "tabitd/errors.hpp"
#include "tabitd/rng.hpp"

namespace tabitd::encoder {

namespace {
constexpr double kResidualScale = 0.70710678118654752440; // sqrt(0.5)

Tensor2 slice_cols(const Tensor2& t, std::size_t c0, std::size_t c1) {
    Tensor2 out(t.rows, c1 - c0);
    for (std::size_t r = 0; r < t.rows; ++r)
        for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = t.at(r, c);
    return out;
}

void paste_cols(Tensor2& dst, const Tensor2& src, std::size_t c0) {
    for (std::size_t r = 0; r < src.rows; ++r)
        for (std::size_t c = 0; c < src.cols; ++c) dst.at(r, c0 + c) = src.at(r, c);
}
} // namespace

// ---------------------------------------------------------------------------
// Config / params
// ---------------------------------------------------------------------------

void EncoderConfig::validate() const {
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (n_d < 1 || n_a < 1) throw ConfigError("n_d and n_a must be >= 1");
    if (gamma < 1.0) throw ConfigError("gamma must be >= 1, got " + std::to_string(gamma));
    if (lambda_sparse < 0.0) throw ConfigError("lambda_sparse must be >= 0");
    if (shared_layers + step_layers < 1)
        throw ConfigError("the feature transformer needs at least one block");
    if (!(eps_sparse > 0.0)) throw ConfigError("eps_sparse must be positive");
    if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be positive");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
        throw ConfigError("bn_momentum must be in (0, 1]");
    if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
}

void TabnetParams::visit(const std::function<void(nn::ParamBlock&)>& fn) {
    for (auto& blk : shared) {
        fn(blk.w);
        fn(blk.b);
    }
    for (auto& step : step_blocks)
        for (auto& blk : step) {
            fn(blk.w);
            fn(blk.b);
        }
    for (auto& att : attentive) {
        fn(att.w);
        fn(att.b);
    }
    fn(w_final);
    fn(b_final);
}

void TabnetParams::visit(const std::function<void(const nn::ParamBlock&)>& fn) const {
    const_cast<TabnetParams*>(this)->visit(
        [&](nn::ParamBlock& p) { fn(static_cast<const nn::ParamBlock&>(p)); });
}

void TabnetParams::visit_bn(const std::function<void(nn::BnStats&)>& fn) {
    fn(input_bn);
    for (auto& usage : shared_stats)
        for (auto& s : usage) fn(s);
    for (auto& step : step_blocks)
        for (auto& blk : step) fn(blk.bn);
    for (auto& att : attentive) fn(att.bn);
}

void TabnetParams::visit_bn(const std::function<void(const nn::BnStats&)>& fn) const {
    const_cast<TabnetParams*>(this)->visit_bn(
        [&](nn::BnStats& s) { fn(static_cast<const nn::BnStats&>(s)); });
}

void TabnetParams::zero_grad() {
    visit([](nn::ParamBlock& p) { p.zero_grad(); });
}

TabnetParams init_params(const EncoderConfig& cfg, std::size_t input_dim, std::uint64_t seed) {
    cfg.validate();
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    const std::size_t h = cfg.hidden_width();
    TabnetParams p;
    p.input_bn = nn::BnStats(input_dim, cfg.bn_momentum, cfg.bn_eps);
    auto make_block = [&](std::size_t in) {
        GluBlockParams blk;
        blk.w = nn::ParamBlock(in, h);
        blk.b = nn::ParamBlock(1, h);
        blk.bn = nn::BnStats(h, cfg.bn_momentum, cfg.bn_eps);
        return blk;
    };
    for (std::size_t i = 0; i < cfg.shared_layers; ++i)
        p.shared.push_back(make_block(i == 0 ? input_dim : h));
    p.shared_stats.assign(cfg.n_steps + 1,
                          std::vector<nn::BnStats>(cfg.shared_layers,
                                                   nn::BnStats(h, cfg.bn_momentum, cfg.bn_eps)));
    p.step_blocks.resize(cfg.n_steps + 1);
    for (auto& step : p.step_blocks)
        for (std::size_t j = 0; j < cfg.step_layers; ++j)
            step.push_back(make_block(cfg.shared_layers == 0 && j == 0 ? input_dim : h));
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        AttentiveParams att;
        att.w = nn::ParamBlock(cfg.n_a, input_dim);
        att.b = nn::ParamBlock(1, input_dim);
        att.bn = nn::BnStats(input_dim, cfg.bn_momentum, cfg.bn_eps);
        p.attentive.push_back(std::move(att));
    }
    p.w_final = nn::ParamBlock(cfg.n_d, cfg.n_classes);
    p.b_final = nn::ParamBlock(1, cfg.n_classes);

    // Weight init draws in the same stable order as visit(); biases stay zero.
    rng::Engine eng(rng::derive_seed(seed, "init"));
    auto init_weight = [&](nn::ParamBlock& w) {
        double scale = std::sqrt(2.0 / static_cast<double>(w.value.rows + w.value.cols));
        for (double& v : w.value.data) v = eng.normal(0.0, scale);
    };
    for (auto& blk : p.shared) init_weight(blk.w);
    for (auto& step : p.step_blocks)
        for (auto& blk : step) init_weight(blk.w);
    for (auto& att : p.attentive) init_weight(att.w);
    init_weight(p.w_final);
    return p;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

namespace {

Tensor2 glu_block_forward(const Tensor2& x, GluBlockParams& p, nn::BnStats& stats, bool residual,
                          Mode mode, GluBlockCache* c) {
    Tensor2 u = nn::linear_forward(x, p.w.value, p.b.value, c ? &c->lin : nullptr);
    Tensor2 v = mode == Mode::train ? nn::batch_norm_train(u, stats, 0, c ? &c->bn : nullptr)
                                    : nn::batch_norm_infer(u, stats);
    Tensor2 g = nn::glu_forward(v, c ? &c->glu : nullptr);
    if (c) c->residual = residual;
    if (!residual) return g;
    require_same_shape(g, x, "feature transformer residual");
    Tensor2 out(g.rows, g.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i)
        out.data[i] = (g.data[i] + x.data[i]) * kResidualScale;
    return out;
}

Tensor2 glu_block_backward(const Tensor2& d_out, GluBlockParams& p, const GluBlockCache& c) {
    Tensor2 d_g = d_out;
    if (c.residual)
        for (double& v : d_g.data) v *= kResidualScale;
    Tensor2 d_v = nn::glu_backward(d_g, c.glu);
    Tensor2 d_u = nn::batch_norm_backward(d_v, c.bn);
    Tensor2 d_x = nn::linear_backward(d_u, c.lin, p.w.value, p.w.grad, p.b.grad);
    if (c.residual) d_x += d_g; // the skip path, already scaled by sqrt(0.5)
    return d_x;
}

} // namespace

Tensor2 feature_transform_backward(const Tensor2& d_out, std::vector<GluBlockParams>& shared,
                                   std::vector<GluBlockParams>& step, const FtCache& cache) {
    if (cache.blocks.size() != shared.size() + step.size())
        throw DimensionError("feature transformer backward: cache does not match blocks");
    Tensor2 g = d_out;
    for (std::size_t idx = cache.blocks.size(); idx-- > 0;) {
        GluBlockParams& p = idx < shared.size() ? shared[idx] : step[idx - shared.size()];
        g = glu_block_backward(g, p, cache.blocks[idx]);
    }
    return g;
}

Tensor2 feature_transform(const Tensor2& in, std::vector<GluBlockParams>& shared,
                          std::vector<GluBlockParams>& step, Mode mode, FtCache* cache,
                          std::vector<nn::BnStats>* shared_bn) {
    if (shared.empty() && step.empty())
        throw ConfigError("feature transformer has no blocks");
    if (shared_bn && shared_bn->size() != shared.size())
        throw DimensionError("feature transformer: " + std::to_string(shared_bn->size()) +
                             " shared stat sets for " + std::to_string(shared.size()) +
                             " shared blocks");
    if (cache) cache->blocks.assign(shared.size() + step.size(), {});
    Tensor2 x = in;
    std::size_t idx = 0;
    for (auto& blk : shared) {
        nn::BnStats& stats = shared_bn ? (*shared_bn)[idx] : blk.bn;
        x = glu_block_forward(x, blk, stats, idx > 0, mode, cache ? &cache->blocks[idx] : nullptr);
        ++idx;
    }
    for (auto& blk : step) {
        x = glu_block_forward(x, blk, blk.bn, idx > 0, mode,
                              cache ? &cache->blocks[idx] : nullptr);
        ++idx;
    }
    return x;
}

Tensor2 attentive_transform(const Tensor2& a_prev, const Tensor2& prior, AttentiveParams& p,
                            Mode mode, StepTape* tape) {
    for (double v : prior.data)
        if (v < 0.0) throw ConfigError("attentive transform: prior has negative entries");
    Tensor2 u = nn::linear_forward(a_prev, p.w.value, p.b.value, tape ? &tape->att_lin : nullptr);
    Tensor2 h = mode == Mode::train
                    ? nn::batch_norm_train(u, p.bn, 0, tape ? &tape->att_bn : nullptr)
                    : nn::batch_norm_infer(u, p.bn);
    Tensor2 z = hadamard(prior, h);
    Tensor2 m = nn::sparsemax_rows(z, tape ? &tape->sm : nullptr);
    if (tape) {
        tape->prior_in = prior;
        tape->att_h = std::move(h);
        tape->mask = m;
    }
    return m;
}

Tensor2 update_prior(const Tensor2& prior, const Tensor2& mask, double gamma) {
    if (gamma < 1.0) throw ConfigError("gamma must be >= 1");
    require_same_shape(prior, mask, "update_prior");
    Tensor2 out(prior.rows, prior.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = prior.data[i] * (gamma - mask.data[i]);
    return out;
}

double sparsity_loss(const std::vector<StepState>& steps, double eps) {
    if (steps.empty()) return 0.0;
    if (!(eps > 0.0)) throw ConfigError("sparsity eps must be positive");
    double total = 0.0;
    for (const auto& s : steps)
        for (double m : s.mask.data) total += -m * std::log(m + eps);
    return total / (static_cast<double>(steps.size()) * static_cast<double>(steps[0].mask.rows));
}

// ---------------------------------------------------------------------------
// Model forward
// ---------------------------------------------------------------------------

TabnetModel::TabnetModel(EncoderConfig cfg_, std::size_t input_dim_, std::uint64_t seed)
    : cfg(cfg_), params(init_params(cfg_, input_dim_, seed)), input_dim(input_dim_) {}

namespace {

EncoderOutput run_forward(TabnetModel& model, const Tensor2& x, Mode mode,
                          std::size_t virtual_batch, EncoderTape* tape,
                          const Tensor2* prior0) {
    const EncoderConfig& cfg = model.cfg;
    TabnetParams& params = model.params;
    if (x.cols != model.input_dim)
        throw DimensionError("encoder: input has " + std::to_string(x.cols) +
                             " columns, model expects " + std::to_string(model.input_dim));
    if (x.rows == 0) throw DimensionError("encoder: empty batch");
    if (!x.all_finite()) throw NumericError("encoder input: non-finite values");
    const std::size_t b = x.rows;
    const std::size_t h = cfg.hidden_width();

    Tensor2 bn_f = mode == Mode::train
                       ? nn::batch_norm_train(x, params.input_bn, virtual_batch,
                                              tape ? &tape->input_bn : nullptr)
                       : nn::batch_norm_infer(x, params.input_bn);
    if (tape) {
        tape->bn_f = bn_f;
        tape->batch = b;
        tape->steps.assign(cfg.n_steps, {});
    }

    Tensor2 ft0 = feature_transform(bn_f, params.shared, params.step_blocks[0], mode,
                                    tape ? &tape->ft0 : nullptr, &params.shared_stats[0]);
    Tensor2 a = slice_cols(ft0, cfg.n_d, h);

    Tensor2 prior;
    if (prior0) {
        if (prior0->rows != b || prior0->cols != model.input_dim)
            throw DimensionError("encoder: prior0 shape " + prior0->shape_str() +
                                 " does not match batch");
        prior = *prior0;
    } else {
        prior = Tensor2::full(b, model.input_dim, 1.0);
    }

    EncoderOutput out;
    out.steps.resize(cfg.n_steps);
    Tensor2 d_out(b, cfg.n_d);
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        StepTape* st = tape ? &tape->steps[i] : nullptr;
        Tensor2 mask = attentive_transform(a, prior, params.attentive[i], mode, st);
        prior = update_prior(prior, mask, cfg.gamma);
        Tensor2 masked = hadamard(mask, bn_f);
        Tensor2 ft = feature_transform(masked, params.shared, params.step_blocks[i + 1], mode,
                                       st ? &st->ft : nullptr, &params.shared_stats[i + 1]);
        Tensor2 d = slice_cols(ft, 0, cfg.n_d);
        a = slice_cols(ft, cfg.n_d, h);
        Tensor2 rd = nn::relu_forward(d, st ? &st->relu : nullptr);
        d_out += rd;
        if (!mask.all_finite() || !d.all_finite() || !a.all_finite())
            throw NumericError("encoder step " + std::to_string(i + 1) +
                               ": non-finite values (overflow)");
        out.steps[i].prior = prior;
        out.steps[i].mask = std::move(mask);
        out.steps[i].a = a;
        out.steps[i].d = std::move(d);
    }

    if (tape) tape->final_lin.x = d_out;
    Tensor2 logits = matmul(d_out, params.w_final.value);
    if (cfg.final_bias)
        for (std::size_t r = 0; r < logits.rows; ++r)
            for (std::size_t c = 0; c < logits.cols; ++c)
                logits.at(r, c) += params.b_final.value.at(0, c);
    if (!logits.all_finite())
        throw NumericError("encoder output head: non-finite logits (overflow)");

    out.d_out = std::move(d_out);
    out.logits = std::move(logits);
    out.l_sparse = sparsity_loss(out.steps, cfg.eps_sparse);
    return out;
}

} // namespace

EncoderOutput TabnetModel::forward(const Tensor2& x, std::size_t virtual_batch,
                                   EncoderTape* tape, const Tensor2* prior0) {
    return run_forward(*this, x, Mode::train, virtual_batch, tape, prior0);
}

EncoderOutput TabnetModel::forward_infer(const Tensor2& x, const Tensor2* prior0) const {
    // Inference mode touches no mutable state: BN uses frozen running stats
    // and no cache/tape is written, so the cast is observationally const.
    auto& self = const_cast<TabnetModel&>(*this);
    return run_forward(self, x, Mode::infer, 0, nullptr, prior0);
}

// ---------------------------------------------------------------------------
// Model backward
// ---------------------------------------------------------------------------

Tensor2 TabnetModel::backward(const EncoderTape& tape, const EncoderBackwardSignals& sig) {
    const std::size_t b = tape.batch;
    const std::size_t d_cols = input_dim;
    const std::size_t h = cfg.hidden_width();
    const std::size_t n_steps = cfg.n_steps;
    if (tape.steps.size() != n_steps)
        throw DimensionError("encoder backward: tape does not match n_steps");

    // Output head.
    Tensor2 d_dout(b, cfg.n_d);
    if (sig.d_logits) {
        if (sig.d_logits->rows != b || sig.d_logits->cols != cfg.n_classes)
            throw DimensionError("encoder backward: d_logits shape mismatch");
        params.w_final.grad += matmul_tn(tape.final_lin.x, *sig.d_logits);
        if (cfg.final_bias)
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < cfg.n_classes; ++c)
                    params.b_final.grad.at(0, c) += sig.d_logits->at(r, c);
        d_dout = matmul_nt(*sig.d_logits, params.w_final.value);
    }

    // d_out = Σ ReLU(d[i]): the same upstream gradient reaches every step's ReLU.
    std::vector<Tensor2> d_d(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) {
        d_d[i] = nn::relu_backward(d_dout, tape.steps[i].relu);
        if (sig.d_step_d) {
            if (sig.d_step_d->size() != n_steps)
                throw DimensionError("encoder backward: d_step_d length mismatch");
            d_d[i] += (*sig.d_step_d)[i];
        }
    }

    const double sparse_norm =
        1.0 / (static_cast<double>(n_steps) * static_cast<double>(b));
    Tensor2 d_bn_f(b, d_cols);
    Tensor2 d_prior(b, d_cols); // gradient w.r.t. P[i]; P[n_steps] has no consumer
    Tensor2 d_a(b, cfg.n_a);    // gradient w.r.t. a[i]; a[n_steps] has no consumer

    for (std::size_t i = n_steps; i-- > 0;) {
        const StepTape& st = tape.steps[i];
        // (d[i], a[i]) split of the feature-transformer output.
        Tensor2 d_ft(b, h);
        paste_cols(d_ft, d_d[i], 0);
        paste_cols(d_ft, d_a, cfg.n_d);
        Tensor2 d_masked = feature_transform_backward(d_ft, params.shared, params.step_blocks[i + 1], st.ft);

        // masked = M[i] ⊙ bn_f
        Tensor2 d_mask = hadamard(d_masked, tape.bn_f);
        d_bn_f += hadamard(d_masked, st.mask);

        // Eq. 3 term: dL/dM = −(log(M+ε) + M/(M+ε)) / (N_steps·B), weighted.
        if (sig.lambda_sparse != 0.0) {
            for (std::size_t k = 0; k < d_mask.data.size(); ++k) {
                double m = st.mask.data[k];
                d_mask.data[k] -= sig.lambda_sparse * sparse_norm *
                                  (std::log(m + cfg.eps_sparse) + m / (m + cfg.eps_sparse));
            }
        }

        // P[i] = P[i-1] ⊙ (γ − M[i])
        Tensor2 d_prior_prev(b, d_cols);
        for (std::size_t k = 0; k < d_prior.data.size(); ++k) {
            d_mask.data[k] -= d_prior.data[k] * st.prior_in.data[k];
            d_prior_prev.data[k] = d_prior.data[k] * (cfg.gamma - st.mask.data[k]);
        }

        // M[i] = sparsemax(P[i-1] ⊙ h)
        Tensor2 d_z = nn::sparsemax_backward(d_mask, st.sm);
        for (std::size_t k = 0; k < d_z.data.size(); ++k)
            d_prior_prev.data[k] += d_z.data[k] * st.att_h.data[k];
        Tensor2 d_h = hadamard(d_z, st.prior_in);

        Tensor2 d_u = nn::batch_norm_backward(d_h, st.att_bn);
        d_a = nn::linear_backward(d_u, st.att_lin, params.attentive[i].w.value,
                                  params.attentive[i].w.grad, params.attentive[i].b.grad);
        d_prior = std::move(d_prior_prev);
    }

    // a[0] came from the initial feature transformer; its d-part is unused.
    Tensor2 d_ft0(b, h);
    paste_cols(d_ft0, d_a, cfg.n_d);
    d_bn_f += feature_transform_backward(d_ft0, params.shared, params.step_blocks[0], tape.ft0);

    return nn::batch_norm_backward(d_bn_f, tape.input_bn);
}

} // namespace tabitd::encoder
