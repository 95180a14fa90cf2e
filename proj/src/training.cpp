#include "tabitd/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <set>
#include <thread>

#include "tabitd/errors.hpp"
#include "tabitd/nn.hpp"
#include "tabitd/rng.hpp"

namespace tabitd::training {

using encoder::TabnetModel;
using fusion::FusedDataset;
using fusion::ThreatClass;

void TrainConfig::validate() const {
    encoder.validate();
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (train-mode BN)");
    if (virtual_batch > batch_size)
        throw ConfigError("train: virtual_batch " + std::to_string(virtual_batch) +
                          " exceeds batch_size " + std::to_string(batch_size));
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train: lr_decay in (0, 1]");
    if (!(lambda_sparse >= 0.0)) throw ConfigError("train: lambda_sparse must be >= 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ConfigError("train: val_fraction must be in [0, 1)");
}

namespace {

Tensor2 gather_rows(const Tensor2& f, const std::vector<std::size_t>& rows, std::size_t begin,
                    std::size_t end) {
    Tensor2 out(end - begin, f.cols);
    for (std::size_t i = begin; i < end; ++i) {
        auto src = f.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i - begin).begin());
    }
    return out;
}

struct Slice {
    Tensor2 x;
    std::vector<int> y;
};

Slice take(const FusedDataset& d, const std::vector<char>& mask, bool keep) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if ((mask[i] != 0) == keep) rows.push_back(i);
    Slice s;
    s.x = gather_rows(d.features, rows, 0, rows.size());
    s.y.reserve(rows.size());
    for (auto r : rows) s.y.push_back(d.labels[r]);
    return s;
}

void check_warm_start(const encoder::TabnetParams& have, const encoder::TabnetParams& want) {
    bool ok = true;
    std::vector<std::pair<std::size_t, std::size_t>> a, b;
    // const_cast-free shape walk via the const visitor
    want.visit([&](const nn::ParamBlock& p) { a.emplace_back(p.value.rows, p.value.cols); });
    have.visit([&](const nn::ParamBlock& p) { b.emplace_back(p.value.rows, p.value.cols); });
    if (a.size() != b.size()) ok = false;
    for (std::size_t i = 0; ok && i < a.size(); ++i)
        if (a[i] != b[i]) ok = false;
    if (!ok)
        throw DimensionError("warm-start parameters do not match the model configuration");
}

double macro_f1_on(const TabnetModel& model, const Slice& val) {
    auto [labels, probs] = predict(model, val.x);
    (void)probs;
    std::vector<int> pred;
    pred.reserve(labels.size());
    for (auto c : labels) pred.push_back(static_cast<int>(c));
    return metrics::compute_metrics(val.y, pred).macro_f1;
}

} // namespace

std::size_t thread_budget() {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::size_t budget = std::min<std::size_t>(hw, 8);
    if (const char* env = std::getenv("TABITD_THREADS")) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
        if (ec != std::errc() || *ptr != '\0' || v == 0)
            throw ConfigError("TABITD_THREADS must be a positive integer, got \"" +
                              std::string(env) + "\"");
        budget = std::min(budget, v);
    }
    return budget;
}

TrainResult train(const FusedDataset& data, const TrainConfig& cfg,
                  const encoder::TabnetParams* warm_start) {
    cfg.validate();
    if (data.rows() == 0) throw EmptyDatasetError("train: empty dataset");
    {
        std::set<int> classes(data.labels.begin(), data.labels.end());
        if (classes.size() < 2)
            throw ConfigError("train: need at least 2 classes present, got " +
                              std::to_string(classes.size()));
    }

    // Validation slice first, so resampling never leaks into checkpoints.
    Slice train_slice, val_slice;
    if (cfg.val_fraction > 0.0) {
        auto mask = fusion::stratified_test_mask(data.labels, cfg.val_fraction,
                                                 rng::derive_seed(cfg.seed, "val-split"));
        val_slice = take(data, mask, true);
        train_slice = take(data, mask, false);
    } else {
        train_slice.x = data.features;
        train_slice.y = data.labels;
    }

    if (cfg.resample) {
        FusedDataset tmp;
        tmp.features = std::move(train_slice.x);
        tmp.labels = std::move(train_slice.y);
        tmp.schema = data.schema;
        FusedDataset r = fusion::resample(tmp, *cfg.resample, cfg.seed);
        train_slice.x = std::move(r.features);
        train_slice.y = std::move(r.labels);
    }
    const std::size_t n_train = train_slice.x.rows;
    if (n_train < 2) throw ConfigError("train: fewer than 2 training rows after splitting");

    TabnetModel model(cfg.encoder, data.cols(), cfg.seed);
    if (warm_start) {
        check_warm_start(*warm_start, model.params);
        model.params = *warm_start;
    }

    std::vector<nn::ParamBlock*> blocks;
    model.params.visit([&](nn::ParamBlock& p) { blocks.push_back(&p); });
    nn::Adam opt(blocks, cfg.learning_rate);

    TrainResult res;
    res.model = model; // placeholder; params overwritten by the checkpoint below
    encoder::TabnetParams best_params = model.params;
    double best_f1 = -1.0;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    std::uint64_t global_step = 0;

    const bool validate_epochs = val_slice.x.rows > 0;
    std::vector<std::size_t> perm(n_train);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));
        opt.set_lr(lr);
        std::iota(perm.begin(), perm.end(), 0);
        rng::Engine eng(rng::derive_seed(cfg.seed, "epoch", epoch));
        eng.shuffle(perm);

        double epoch_loss = 0.0;
        std::size_t batch_id = 0;
        try {
            for (auto [lo, hi] : nn::ghost_chunks(n_train, cfg.batch_size)) {
                Tensor2 x = gather_rows(train_slice.x, perm, lo, hi);
                std::vector<int> y;
                y.reserve(hi - lo);
                for (std::size_t i = lo; i < hi; ++i) y.push_back(train_slice.y[perm[i]]);

                encoder::EncoderTape tape;
                auto out = model.forward(x, cfg.virtual_batch, &tape);
                Tensor2 d_logits;
                double ce = nn::cross_entropy(out.logits, y, &d_logits);
                double loss = ce + cfg.lambda_sparse * out.l_sparse;
                if (!std::isfinite(loss)) {
                    res.diverged = true;
                    res.divergence_info =
                        "non-finite loss at learning rate " + std::to_string(lr) + ", step " +
                        std::to_string(global_step) + ", epoch " + std::to_string(epoch + 1) +
                        ", batch " + std::to_string(batch_id);
                    break;
                }
                model.zero_grad();
                encoder::EncoderBackwardSignals sig;
                sig.d_logits = &d_logits;
                sig.lambda_sparse = cfg.lambda_sparse;
                model.backward(tape, sig);
                opt.step();
                epoch_loss += loss * static_cast<double>(hi - lo);
                ++global_step;
                ++batch_id;
            }
        } catch (const NumericError& e) {
            res.diverged = true;
            res.divergence_info = std::string("numeric overflow (") + e.what() +
                                  ") at learning rate " + std::to_string(lr) + ", step " +
                                  std::to_string(global_step) + ", epoch " +
                                  std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batch_id);
        }
        if (res.diverged) break;

        EpochLog log;
        log.epoch = epoch + 1;
        log.train_loss = epoch_loss / static_cast<double>(n_train);
        log.lr = lr;
        if (validate_epochs) {
            log.val_macro_f1 = macro_f1_on(model, val_slice);
            if (log.val_macro_f1 > best_f1) {
                best_f1 = log.val_macro_f1;
                best_params = model.params;
                best_epoch = epoch + 1;
                since_best = 0;
            } else if (++since_best > cfg.early_stop_patience) {
                res.log.push_back(log);
                res.early_stopped = true;
                break;
            }
        } else {
            best_params = model.params;
            best_epoch = epoch + 1;
        }
        res.log.push_back(log);
    }

    model.params = std::move(best_params);
    res.model = std::move(model);
    res.best_epoch = best_epoch;
    return res;
}

std::pair<std::vector<ThreatClass>, Tensor2> predict(const TabnetModel& model,
                                                     const Tensor2& features) {
    if (features.cols != model.input_dim)
        throw SchemaError("predict: input has " + std::to_string(features.cols) +
                          " features, model expects " + std::to_string(model.input_dim));
    if (features.rows == 0) throw EmptyDatasetError("predict: empty feature matrix");

    const std::size_t n = features.rows;
    Tensor2 probs(n, model.cfg.n_classes);
    auto score_range = [&](std::size_t lo, std::size_t hi) {
        Tensor2 chunk(hi - lo, features.cols);
        for (std::size_t r = lo; r < hi; ++r) {
            auto src = features.row(r);
            std::copy(src.begin(), src.end(), chunk.row(r - lo).begin());
        }
        auto out = model.forward_infer(chunk);
        Tensor2 p = nn::softmax_rows(out.logits);
        for (std::size_t r = lo; r < hi; ++r) {
            auto src = p.row(r - lo);
            std::copy(src.begin(), src.end(), probs.row(r).begin());
        }
    };

    std::size_t threads = std::min(thread_budget(), (n + 255) / 256);
    if (threads <= 1) {
        score_range(0, n);
    } else {
        // Row-independent inference: chunked scoring is bitwise identical.
        std::vector<std::thread> pool;
        std::size_t per = (n + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            std::size_t lo = t * per;
            std::size_t hi = std::min(n, lo + per);
            if (lo >= hi) break;
            pool.emplace_back(score_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<ThreatClass> labels;
    labels.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = probs.row(r);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[arg]) arg = c; // strict: ties keep the lower index
        labels.push_back(static_cast<ThreatClass>(arg));
    }
    return {std::move(labels), std::move(probs)};
}

metrics::MetricsReport evaluate(const TabnetModel& model, const FusedDataset& data) {
    if (data.rows() == 0) throw EmptyDatasetError("evaluate: empty dataset");
    auto [labels, probs] = predict(model, data.features);
    (void)probs;
    std::vector<int> pred;
    pred.reserve(labels.size());
    for (auto c : labels) pred.push_back(static_cast<int>(c));
    return metrics::compute_metrics(data.labels, pred);
}

} // namespace tabitd::training
