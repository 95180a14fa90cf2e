#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabitd/errors.hpp"
#include "tabitd/explain.hpp"
#include "tabitd/fusion.hpp"
#include "tabitd/metrics.hpp"
#include "tabitd/rng.hpp"
#include "tabitd/training.hpp"

using namespace tabitd;
using rng::Engine;
using fusion::ThreatClass;

namespace {

int code(ThreatClass c) { return static_cast<int>(c); }

} // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST_CASE("two-class confusion hand case") {
    // truth DoS x10: 8 hit, 2 -> Normal. truth Normal x10: 9 hit, 1 -> DoS.
    std::vector<int> truth, pred;
    for (int i = 0; i < 8; ++i) { truth.push_back(code(ThreatClass::DoS)); pred.push_back(code(ThreatClass::DoS)); }
    for (int i = 0; i < 2; ++i) { truth.push_back(code(ThreatClass::DoS)); pred.push_back(code(ThreatClass::Normal)); }
    for (int i = 0; i < 9; ++i) { truth.push_back(code(ThreatClass::Normal)); pred.push_back(code(ThreatClass::Normal)); }
    truth.push_back(code(ThreatClass::Normal)); pred.push_back(code(ThreatClass::DoS));

    auto r = metrics::compute_metrics(truth, pred);
    CHECK(r.total == 20);
    CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-12));

    auto& dos = r.per_class[static_cast<std::size_t>(ThreatClass::DoS)];
    CHECK(dos.applicable);
    CHECK(dos.precision == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(dos.recall == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(dos.f1 == doctest::Approx(2.0 * (8.0 / 9.0) * 0.8 / (8.0 / 9.0 + 0.8)).epsilon(1e-12));

    // Binary roll-up: DoS is the only attack class present.
    CHECK(r.detection_rate == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.false_alarm_rate == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.false_negative_rate == 1.0 - r.detection_rate);

    // Only DoS and Normal are applicable; macro averages over those two.
    auto& nrm = r.per_class[static_cast<std::size_t>(ThreatClass::Normal)];
    CHECK(r.macro_precision ==
          doctest::Approx((dos.precision + nrm.precision) / 2.0).epsilon(1e-12));
    CHECK(r.macro_f1 == doctest::Approx((dos.f1 + nrm.f1) / 2.0).epsilon(1e-12));
    int applicable = 0;
    for (auto& m : r.per_class)
        if (m.applicable) ++applicable;
    CHECK(applicable == 2);
}

TEST_CASE("perfect predictions saturate every score") {
    std::vector<int> truth;
    for (int c = 0; c < static_cast<int>(metrics::kNumClasses); ++c)
        for (int i = 0; i < 3; ++i) truth.push_back(c);
    auto r = metrics::compute_metrics(truth, truth);
    CHECK(r.accuracy == 1.0);
    CHECK(r.detection_rate == 1.0);
    CHECK(r.false_alarm_rate == 0.0);
    CHECK(r.false_negative_rate == 0.0);
    CHECK(r.macro_f1 == 1.0);
    for (auto& m : r.per_class) {
        CHECK(m.applicable);
        CHECK(m.f1 == 1.0);
    }
}

TEST_CASE("attack-to-attack confusion still counts as detected") {
    // One Probe row predicted as DoS: wrong class, right side of the fence.
    std::vector<int> truth{code(ThreatClass::Probe), code(ThreatClass::Normal)};
    std::vector<int> pred{code(ThreatClass::DoS), code(ThreatClass::Normal)};
    auto r = metrics::compute_metrics(truth, pred);
    CHECK(r.detection_rate == 1.0);
    CHECK(r.false_alarm_rate == 0.0);
    CHECK(r.accuracy == 0.5);
}

TEST_CASE("one-sided datasets get the vacuous binary rates") {
    std::vector<int> benign{code(ThreatClass::Normal), code(ThreatClass::Benign)};
    auto r1 = metrics::compute_metrics(benign, benign);
    CHECK(r1.detection_rate == 1.0); // no positives to miss
    CHECK(r1.false_negative_rate == 0.0);

    std::vector<int> attacks{code(ThreatClass::DoS), code(ThreatClass::U2R)};
    auto r2 = metrics::compute_metrics(attacks, attacks);
    CHECK(r2.false_alarm_rate == 0.0); // no negatives to false-alarm on
}

TEST_CASE("metrics validate their inputs") {
    std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(metrics::compute_metrics(a, b), DimensionError);
    std::vector<int> bad{0, 7}, ok{0, 1};
    CHECK_THROWS_AS(metrics::compute_metrics(bad, ok), ConfigError);
    std::vector<int> neg{0, -1};
    CHECK_THROWS_AS(metrics::compute_metrics(neg, ok), ConfigError);
    std::vector<int> empty;
    CHECK_THROWS_AS(metrics::compute_metrics(empty, empty), EmptyDatasetError);
}

TEST_CASE("a prediction-only class is applicable with zero precision") {
    // Truth never contains U2R but one prediction does.
    std::vector<int> truth{code(ThreatClass::Normal), code(ThreatClass::Normal)};
    std::vector<int> pred{code(ThreatClass::U2R), code(ThreatClass::Normal)};
    auto r = metrics::compute_metrics(truth, pred);
    auto& u2r = r.per_class[static_cast<std::size_t>(ThreatClass::U2R)];
    CHECK(u2r.applicable);
    CHECK(u2r.precision == 0.0);
    CHECK(u2r.recall == 0.0);
    CHECK(u2r.f1 == 0.0);
}

TEST_CASE("reports from labels and from the confusion matrix agree") {
    Engine eng(55);
    std::vector<int> truth(300), pred(300);
    for (auto& v : truth) v = static_cast<int>(eng.below(metrics::kNumClasses));
    for (auto& v : pred) v = static_cast<int>(eng.below(metrics::kNumClasses));
    auto a = metrics::compute_metrics(truth, pred);
    auto b = metrics::metrics_from_confusion(a.confusion);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.macro_f1 == b.macro_f1);
    CHECK(a.detection_rate == b.detection_rate);
    CHECK(a.false_alarm_rate == b.false_alarm_rate);
    for (std::size_t c = 0; c < metrics::kNumClasses; ++c) {
        CHECK(a.per_class[c].precision == b.per_class[c].precision);
        CHECK(a.per_class[c].recall == b.per_class[c].recall);
        CHECK(a.per_class[c].f1 == b.per_class[c].f1);
    }
}

TEST_CASE("text, json, and plot outputs carry the same numbers") {
    std::vector<int> truth{code(ThreatClass::DoS), code(ThreatClass::DoS),
                           code(ThreatClass::Normal), code(ThreatClass::Normal)};
    std::vector<int> pred{code(ThreatClass::DoS), code(ThreatClass::Normal),
                          code(ThreatClass::Normal), code(ThreatClass::Normal)};
    auto r = metrics::compute_metrics(truth, pred);

    auto text = metrics::format_text(r);
    CHECK(text.find("accuracy") != std::string::npos);
    CHECK(text.find("DoS") != std::string::npos);

    auto parsed = nlohmann::json::parse(metrics::to_json_string(r));
    CHECK(parsed["accuracy"].get<double>() == doctest::Approx(r.accuracy).epsilon(1e-9));
    CHECK(parsed["detection_rate"].get<double>() ==
          doctest::Approx(r.detection_rate).epsilon(1e-9));

    auto plot = metrics::plot_data(r);
    CHECK(plot.find("accuracy") != std::string::npos);
    CHECK(plot.find(',') != std::string::npos);
}

// ---------------------------------------------------------------------------
// Published reference tables
// ---------------------------------------------------------------------------

TEST_CASE("bundled reference tables match the shipped JSON copy") {
    std::ifstream in(std::string(TABITD_DATA_DIR) + "/reference_tables.json");
    REQUIRE(in.good());
    auto doc = nlohmann::json::parse(in);
    auto& tables = metrics::reference_tables();
    REQUIRE(doc["tables"].size() == tables.size());
    std::size_t checked = 0;
    for (auto& jt : doc["tables"]) {
        auto& t = metrics::reference_table(jt["name"].get<std::string>());
        CHECK(t.method == jt["method"].get<std::string>());
        CHECK(t.dataset == jt["dataset"].get<std::string>());
        if (jt.contains("average_accuracy"))
            CHECK(t.average_accuracy ==
                  doctest::Approx(jt["average_accuracy"].get<double>()).epsilon(1e-12));
        else
            CHECK(t.average_accuracy == -1.0);
        for (auto& [cls_name, cell] : jt["classes"].items()) {
            auto cls = fusion::threat_class_from_string(cls_name);
            auto& m = t.per_class[static_cast<std::size_t>(cls)];
            CHECK(m.precision == doctest::Approx(cell["precision"].get<double>()).epsilon(1e-12));
            CHECK(m.recall == doctest::Approx(cell["recall"].get<double>()).epsilon(1e-12));
            CHECK(m.f1 == doctest::Approx(cell["f1"].get<double>()).epsilon(1e-12));
            ++checked;
        }
    }
    CHECK(checked == tables.size() * metrics::kNumClasses);
}

TEST_CASE("reference spot values") {
    auto& ours_nsl = metrics::reference_table("paper-ours-nsl-ueba");
    CHECK(ours_nsl.per_class[static_cast<std::size_t>(ThreatClass::U2R)].f1 == 0.9370);
    CHECK(ours_nsl.average_accuracy == 0.9671);

    auto& cat_nsl = metrics::reference_table("paper-catboost-nsl-ueba");
    CHECK(cat_nsl.per_class[static_cast<std::size_t>(ThreatClass::U2R)].f1 == 0.0);
    CHECK(cat_nsl.per_class[static_cast<std::size_t>(ThreatClass::Malicious)].f1 == 0.0);

    auto& ours_kdd = metrics::reference_table("paper-ours-kdd-ueba");
    CHECK(ours_kdd.per_class[static_cast<std::size_t>(ThreatClass::Probe)].precision == 1.0);
    CHECK(ours_kdd.average_accuracy == 0.9725);
}

TEST_CASE("unknown reference table names are rejected with the valid list") {
    try {
        metrics::reference_table("bogus");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("bogus") != std::string::npos);
        CHECK(msg.find("paper-ours-nsl-ueba") != std::string::npos);
    }
}

TEST_CASE("delta tables subtract reference from measured") {
    std::vector<int> truth, pred;
    for (int c = 0; c < static_cast<int>(metrics::kNumClasses); ++c)
        for (int i = 0; i < 2; ++i) truth.push_back(c);
    pred = truth;
    auto r = metrics::compute_metrics(truth, pred); // all scores 1
    auto& ref = metrics::reference_table("paper-ours-nsl-ueba");
    auto d = metrics::compare_report(r, ref);
    CHECK(d.reference == "paper-ours-nsl-ueba");
    CHECK(d.ours_accuracy == 1.0);
    CHECK(d.reference_avg_accuracy == 0.9671);
    REQUIRE(d.rows.size() == metrics::kNumClasses);
    for (auto& row : d.rows) {
        auto& cell = ref.per_class[static_cast<std::size_t>(row.cls)];
        CHECK(row.d_f1 == doctest::Approx(1.0 - cell.f1).epsilon(1e-12));
        CHECK(row.d_precision == doctest::Approx(1.0 - cell.precision).epsilon(1e-12));
    }
    auto text = metrics::format_delta_text(d, ref);
    CHECK(text.find("paper-ours-nsl-ueba") != std::string::npos);
    auto parsed = nlohmann::json::parse(metrics::delta_to_json_string(d, ref));
    CHECK(parsed["reference"].get<std::string>() == "paper-ours-nsl-ueba");
}

// ---------------------------------------------------------------------------
// Supervised training
// ---------------------------------------------------------------------------

namespace {

// Linearly separable 4-class task in 6 dimensions with a comfortable margin.
fusion::FusedDataset separable_task(std::size_t n, std::uint64_t seed) {
    Engine eng(seed);
    fusion::FusedDataset data;
    data.features = Tensor2(n, 6);
    data.labels.resize(n);
    const int classes[4] = {code(ThreatClass::Benign), code(ThreatClass::DoS),
                            code(ThreatClass::Normal), code(ThreatClass::Probe)};
    for (std::size_t r = 0; r < n; ++r) {
        int k = static_cast<int>(eng.below(4));
        // Separated cluster centers on two coordinates; rest is noise.
        double cx = (k & 1) ? 3.0 : -3.0;
        double cy = (k & 2) ? 3.0 : -3.0;
        data.features.at(r, 0) = cx + eng.normal() * 0.5;
        data.features.at(r, 1) = cy + eng.normal() * 0.5;
        for (std::size_t j = 2; j < 6; ++j) data.features.at(r, j) = eng.normal();
        data.labels[r] = classes[k];
    }
    return data;
}

/// Multiclass perceptron: converges to zero training errors only if the task
/// is linearly separable. Serves as the independent separability certificate.
bool perceptron_separates(const fusion::FusedDataset& data, std::size_t max_epochs) {
    const std::size_t d = data.cols();
    std::vector<std::array<double, 8>> w(metrics::kNumClasses); // bias at [d]
    for (auto& row : w) row.fill(0.0);
    for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
        std::size_t errors = 0;
        for (std::size_t r = 0; r < data.rows(); ++r) {
            int best = 0;
            double best_score = -1e300;
            for (std::size_t c = 0; c < metrics::kNumClasses; ++c) {
                double s = w[c][d];
                for (std::size_t j = 0; j < d; ++j) s += w[c][j] * data.features.at(r, j);
                if (s > best_score) {
                    best_score = s;
                    best = static_cast<int>(c);
                }
            }
            int want = data.labels[r];
            if (best != want) {
                ++errors;
                for (std::size_t j = 0; j < d; ++j) {
                    w[want][j] += data.features.at(r, j);
                    w[best][j] -= data.features.at(r, j);
                }
                w[want][d] += 1.0;
                w[best][d] -= 1.0;
            }
        }
        if (errors == 0) return true;
    }
    return false;
}

double accuracy(const encoder::TabnetModel& m, const fusion::FusedDataset& data) {
    auto [cls, probs] = training::predict(m, data.features);
    std::size_t hit = 0;
    for (std::size_t r = 0; r < data.labels.size(); ++r)
        if (static_cast<int>(cls[r]) == data.labels[r]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(data.labels.size());
}

training::TrainConfig small_train_cfg() {
    training::TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 64;
    cfg.virtual_batch = 32;
    cfg.seed = 3;
    cfg.val_fraction = 0.1;
    cfg.encoder.n_steps = 2;
    cfg.encoder.n_d = 8;
    cfg.encoder.n_a = 8;
    cfg.encoder.shared_layers = 1;
    cfg.encoder.step_layers = 1;
    return cfg;
}

} // namespace

TEST_CASE("a certified separable task is learned almost perfectly") {
    auto data = separable_task(600, 81);
    REQUIRE(perceptron_separates(data, 200)); // independent certificate
    auto cfg = small_train_cfg();
    cfg.epochs = 40;
    cfg.val_fraction = 0.0; // train to the end; no early checkpoint freeze
    auto res = training::train(data, cfg);
    REQUIRE_FALSE(res.diverged);
    CHECK(res.best_epoch >= 1);
    CHECK(accuracy(res.model, data) > 0.99);
    // Epoch log sanity: 1-based contiguous epochs with the decayed rate.
    REQUIRE_FALSE(res.log.empty());
    CHECK(res.log.front().epoch == 1);
    CHECK(res.log.front().lr == doctest::Approx(cfg.learning_rate).epsilon(1e-12));
    if (res.log.size() > 1)
        CHECK(res.log[1].lr == doctest::Approx(cfg.learning_rate * cfg.lr_decay).epsilon(1e-12));
    for (auto& e : res.log) CHECK(e.val_macro_f1 >= -1.0);
}

TEST_CASE("training is deterministic in its seed") {
    auto data = separable_task(200, 91);
    auto cfg = small_train_cfg();
    cfg.epochs = 5;
    auto a = training::train(data, cfg);
    auto b = training::train(data, cfg);
    cfg.seed += 1;
    auto c = training::train(data, cfg);

    std::vector<double> flat_a, flat_b, flat_c;
    a.model.params.visit([&](const nn::ParamBlock& p) {
        flat_a.insert(flat_a.end(), p.value.data.begin(), p.value.data.end());
    });
    b.model.params.visit([&](const nn::ParamBlock& p) {
        flat_b.insert(flat_b.end(), p.value.data.begin(), p.value.data.end());
    });
    c.model.params.visit([&](const nn::ParamBlock& p) {
        flat_c.insert(flat_c.end(), p.value.data.begin(), p.value.data.end());
    });
    CHECK(flat_a == flat_b);
    CHECK(flat_a != flat_c);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].val_macro_f1 == b.log[i].val_macro_f1);
    }
}

TEST_CASE("a tiny batch is memorized") {
    auto data = separable_task(32, 101);
    auto cfg = small_train_cfg();
    cfg.epochs = 200;
    cfg.batch_size = 32;
    cfg.virtual_batch = 16;
    cfg.val_fraction = 0.0;
    cfg.lr_decay = 0.99;
    auto res = training::train(data, cfg);
    REQUIRE_FALSE(res.diverged);
    CHECK(res.log.back().train_loss < 0.05);
    CHECK(accuracy(res.model, data) > 0.95);
}

TEST_CASE("the sparsity penalty tightens the masks") {
    auto data = separable_task(300, 111);
    auto loose_cfg = small_train_cfg();
    loose_cfg.epochs = 15;
    loose_cfg.val_fraction = 0.0;
    loose_cfg.lambda_sparse = 0.0;
    auto tight_cfg = loose_cfg;
    tight_cfg.lambda_sparse = 1.0;

    auto loose = training::train(data, loose_cfg);
    auto tight = training::train(data, tight_cfg);
    REQUIRE_FALSE(loose.diverged);
    REQUIRE_FALSE(tight.diverged);

    auto entropy = [&](const encoder::TabnetModel& m) {
        auto out = m.forward_infer(data.features);
        return encoder::sparsity_loss(out.steps, m.cfg.eps_sparse);
    };
    CHECK(entropy(tight.model) < entropy(loose.model));
}

TEST_CASE("early stopping fires when validation stalls") {
    // Random labels: validation macro-F1 cannot improve for long.
    Engine eng(121);
    fusion::FusedDataset data;
    data.features = Tensor2(300, 5);
    for (double& v : data.features.data) v = eng.normal();
    data.labels.resize(300);
    for (auto& l : data.labels) l = static_cast<int>(eng.below(3));

    auto cfg = small_train_cfg();
    cfg.epochs = 100;
    cfg.val_fraction = 0.2;
    cfg.early_stop_patience = 3;
    auto res = training::train(data, cfg);
    REQUIRE_FALSE(res.diverged);
    CHECK(res.early_stopped);
    CHECK(res.log.size() < 100);
    CHECK(res.best_epoch >= 1);
    CHECK(res.best_epoch <= res.log.size());
}

TEST_CASE("divergence is reported, not thrown, with the last finite checkpoint") {
    auto data = separable_task(200, 131);
    auto cfg = small_train_cfg();
    cfg.epochs = 10;
    // Batch norm keeps the net scale-invariant, so a merely huge rate only
    // thrashes; this one overflows the very first matmul after the update.
    cfg.learning_rate = 1e308;
    auto res = training::train(data, cfg);
    CHECK(res.diverged);
    CHECK_FALSE(res.divergence_info.empty());
    bool finite = true;
    res.model.params.visit([&](const nn::ParamBlock& p) {
        if (!p.value.all_finite()) finite = false;
    });
    CHECK(finite);
    auto [cls, probs] = training::predict(res.model, data.features);
    CHECK(probs.all_finite());
}

TEST_CASE("training rejects bad configurations and data") {
    auto data = separable_task(50, 141);
    auto cfg = small_train_cfg();

    auto broken = cfg;
    broken.epochs = 0;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.batch_size = 1;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.virtual_batch = 128;
    broken.batch_size = 64;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.learning_rate = 0.0;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.lr_decay = 0.0;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.lambda_sparse = -0.5;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);
    broken = cfg;
    broken.val_fraction = 1.0;
    CHECK_THROWS_AS(training::train(data, broken), ConfigError);

    fusion::FusedDataset empty;
    CHECK_THROWS_AS(training::train(empty, cfg), EmptyDatasetError);

    // Single-class data cannot drive a classifier.
    fusion::FusedDataset mono;
    mono.features = Tensor2(20, 3);
    Engine eng(1);
    for (double& v : mono.features.data) v = eng.normal();
    mono.labels.assign(20, code(ThreatClass::DoS));
    CHECK_THROWS_AS(training::train(mono, cfg), ConfigError);
}

TEST_CASE("warm starts must match the architecture") {
    auto data = separable_task(100, 151);
    auto cfg = small_train_cfg();
    cfg.epochs = 2;
    encoder::EncoderConfig other = cfg.encoder;
    other.n_d = 4; // different width
    auto params = encoder::init_params(other, data.cols(), 1);
    CHECK_THROWS_AS(training::train(data, cfg, &params), DimensionError);

    // A matching warm start is accepted.
    auto good = encoder::init_params(cfg.encoder, data.cols(), 1);
    auto res = training::train(data, cfg, &good);
    CHECK_FALSE(res.diverged);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

TEST_CASE("prediction rows are proper distributions and ties go low") {
    encoder::EncoderConfig ec;
    ec.n_steps = 2;
    ec.n_d = 4;
    ec.n_a = 4;
    ec.shared_layers = 1;
    ec.step_layers = 1;
    encoder::TabnetModel model(ec, 5, 161);

    Engine eng(162);
    Tensor2 x(9, 5);
    for (double& v : x.data) v = eng.normal();
    auto [cls, probs] = training::predict(model, x);
    REQUIRE(cls.size() == 9);
    REQUIRE(probs.rows == 9);
    REQUIRE(probs.cols == metrics::kNumClasses);
    for (std::size_t r = 0; r < probs.rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) {
            CHECK(probs.at(r, c) >= 0.0);
            sum += probs.at(r, c);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    // Zero output head -> all logits equal -> uniform probabilities, class 0.
    model.params.w_final.value.fill(0.0);
    auto [cls0, probs0] = training::predict(model, x);
    for (std::size_t r = 0; r < x.rows; ++r) {
        CHECK(cls0[r] == ThreatClass::Benign);
        for (std::size_t c = 0; c < probs0.cols; ++c)
            CHECK(probs0.at(r, c) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(training::predict(model, Tensor2(2, 4)), SchemaError);
    CHECK_THROWS_AS(training::predict(model, Tensor2(0, 5)), EmptyDatasetError);
}

TEST_CASE("evaluate wraps predict and the metrics builder") {
    auto data = separable_task(150, 171);
    auto cfg = small_train_cfg();
    cfg.epochs = 8;
    auto res = training::train(data, cfg);
    auto rep = training::evaluate(res.model, data);

    auto [cls, probs] = training::predict(res.model, data.features);
    std::vector<int> pred(cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i) pred[i] = static_cast<int>(cls[i]);
    auto manual = metrics::compute_metrics(data.labels, pred);
    CHECK(rep.accuracy == manual.accuracy);
    CHECK(rep.macro_f1 == manual.macro_f1);
    CHECK(rep.confusion == manual.confusion);

    fusion::FusedDataset empty;
    CHECK_THROWS_AS(training::evaluate(res.model, empty), EmptyDatasetError);
}

TEST_CASE("prediction is invariant to inference chunking/thread budget") {
    auto data = separable_task(257, 181); // odd size, not a multiple of any chunk
    auto cfg = small_train_cfg();
    cfg.epochs = 4;
    auto res = training::train(data, cfg);

    REQUIRE(setenv("TABITD_THREADS", "1", 1) == 0);
    auto [cls1, p1] = training::predict(res.model, data.features);
    REQUIRE(setenv("TABITD_THREADS", "7", 1) == 0);
    auto [cls7, p7] = training::predict(res.model, data.features);
    unsetenv("TABITD_THREADS");
    auto [clsd, pd] = training::predict(res.model, data.features);
    CHECK(p1.data == p7.data);
    CHECK(p1.data == pd.data);
    CHECK(cls1 == cls7);
    CHECK(cls1 == clsd);
}

TEST_CASE("the thread budget rejects a malformed override") {
    REQUIRE(setenv("TABITD_THREADS", "banana", 1) == 0);
    CHECK_THROWS_AS(training::thread_budget(), ConfigError);
    REQUIRE(setenv("TABITD_THREADS", "0", 1) == 0);
    CHECK_THROWS_AS(training::thread_budget(), ConfigError);
    REQUIRE(setenv("TABITD_THREADS", "3", 1) == 0);
    CHECK(training::thread_budget() <= 3);
    CHECK(training::thread_budget() >= 1);
    unsetenv("TABITD_THREADS");
    CHECK(training::thread_budget() >= 1);
}

TEST_CASE("resampling inside training keeps rare-class rows in play") {
    // 290 Normal vs 10 U2R. With resampling the model sees U2R often enough
    // to place nonzero probability mass on it.
    Engine eng(191);
    fusion::FusedDataset data;
    data.features = Tensor2(300, 5);
    data.labels.resize(300);
    for (std::size_t r = 0; r < 300; ++r) {
        bool rare = r < 10;
        for (std::size_t j = 0; j < 5; ++j)
            data.features.at(r, j) = eng.normal() + (rare ? 4.0 : 0.0);
        data.labels[r] = rare ? code(ThreatClass::U2R) : code(ThreatClass::Normal);
    }

    auto cfg = small_train_cfg();
    cfg.epochs = 15;
    cfg.val_fraction = 0.1;
    fusion::ResampleSpec spec;
    spec.floor_fraction = 0.3;
    cfg.resample = spec;
    auto res = training::train(data, cfg);
    REQUIRE_FALSE(res.diverged);
    auto rep = training::evaluate(res.model, data);
    CHECK(rep.per_class[static_cast<std::size_t>(ThreatClass::U2R)].recall > 0.5);
}
