#include "tabitd/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabitd/decoder.hpp"
#include "tabitd/errors.hpp"
#include "tabitd/explain.hpp"
#include "tabitd/fusion.hpp"
#include "tabitd/io.hpp"
#include "tabitd/metrics.hpp"
#include "tabitd/model_io.hpp"
#include "tabitd/synth.hpp"
#include "tabitd/training.hpp"

namespace tabitd::cli {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// RunConfig: default -> config file -> command line, provenance per field
// ---------------------------------------------------------------------------

struct Resolved {
    training::TrainConfig train;
    bool pretrain_enabled = false;
    decoder::PretrainConfig pretrain;
    std::map<std::string, std::string> source; // field -> default|config|cli

    void note(const std::string& field, const std::string& from) { source[field] = from; }
};

void apply_config_file(Resolved& r, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");

    auto num = [&](const json& v, const char* key) -> double {
        if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be numeric");
        return v.get<double>();
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "epochs") r.train.epochs = static_cast<std::size_t>(num(value, "epochs"));
        else if (key == "batch_size") r.train.batch_size = static_cast<std::size_t>(num(value, "batch_size"));
        else if (key == "virtual_batch") r.train.virtual_batch = static_cast<std::size_t>(num(value, "virtual_batch"));
        else if (key == "learning_rate") r.train.learning_rate = num(value, "learning_rate");
        else if (key == "lr_decay") r.train.lr_decay = num(value, "lr_decay");
        else if (key == "lambda_sparse") r.train.lambda_sparse = num(value, "lambda_sparse");
        else if (key == "seed") r.train.seed = static_cast<std::uint64_t>(num(value, "seed"));
        else if (key == "early_stop_patience") r.train.early_stop_patience = static_cast<std::size_t>(num(value, "early_stop_patience"));
        else if (key == "val_fraction") r.train.val_fraction = num(value, "val_fraction");
        else if (key == "resample") {
            fusion::ResampleSpec spec;
            if (value.is_object()) {
                for (const auto& [k2, v2] : value.items()) {
                    if (k2 == "floor_fraction") spec.floor_fraction = num(v2, "resample.floor_fraction");
                    else throw ConfigError("unknown config key 'resample." + k2 + "'");
                }
            } else if (!value.is_boolean() || !value.get<bool>()) {
                throw ConfigError("config key 'resample' must be true or an object");
            }
            r.train.resample = spec;
            r.note("resample", "config");
        } else if (key == "pretrain") {
            r.pretrain_enabled = true;
            if (value.is_object()) {
                for (const auto& [k2, v2] : value.items()) {
                    if (k2 == "epochs") r.pretrain.epochs = static_cast<std::size_t>(num(v2, "pretrain.epochs"));
                    else if (k2 == "batch_size") r.pretrain.batch_size = static_cast<std::size_t>(num(v2, "pretrain.batch_size"));
                    else if (k2 == "virtual_batch") r.pretrain.virtual_batch = static_cast<std::size_t>(num(v2, "pretrain.virtual_batch"));
                    else if (k2 == "learning_rate") r.pretrain.learning_rate = num(v2, "pretrain.learning_rate");
                    else if (k2 == "lr_decay") r.pretrain.lr_decay = num(v2, "pretrain.lr_decay");
                    else if (k2 == "p_s") r.pretrain.p_s = num(v2, "pretrain.p_s");
                    else if (k2 == "holdout_fraction") r.pretrain.holdout_fraction = num(v2, "pretrain.holdout_fraction");
                    else if (k2 == "decoder_layers") r.pretrain.decoder_layers = static_cast<std::size_t>(num(v2, "pretrain.decoder_layers"));
                    else throw ConfigError("unknown config key 'pretrain." + k2 + "'");
                }
            } else if (!value.is_boolean() || !value.get<bool>()) {
                throw ConfigError("config key 'pretrain' must be true or an object");
            }
            r.note("pretrain", "config");
        } else if (key == "encoder") {
            if (!value.is_object()) throw ConfigError("config key 'encoder' must be an object");
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "n_steps") r.train.encoder.n_steps = static_cast<std::size_t>(num(v2, "encoder.n_steps"));
                else if (k2 == "n_d") r.train.encoder.n_d = static_cast<std::size_t>(num(v2, "encoder.n_d"));
                else if (k2 == "n_a") r.train.encoder.n_a = static_cast<std::size_t>(num(v2, "encoder.n_a"));
                else if (k2 == "gamma") r.train.encoder.gamma = num(v2, "encoder.gamma");
                else if (k2 == "shared_layers") r.train.encoder.shared_layers = static_cast<std::size_t>(num(v2, "encoder.shared_layers"));
                else if (k2 == "step_layers") r.train.encoder.step_layers = static_cast<std::size_t>(num(v2, "encoder.step_layers"));
                else if (k2 == "final_bias") {
                    if (!v2.is_boolean()) throw ConfigError("encoder.final_bias must be boolean");
                    r.train.encoder.final_bias = v2.get<bool>();
                } else {
                    throw ConfigError("unknown config key 'encoder." + k2 + "'");
                }
                r.note("encoder." + k2, "config");
            }
            continue;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (key != "resample" && key != "pretrain") r.note(key, "config");
    }
}

std::string config_echo_json(const Resolved& r) {
    json j;
    j["epochs"] = r.train.epochs;
    j["batch_size"] = r.train.batch_size;
    j["virtual_batch"] = r.train.virtual_batch;
    j["learning_rate"] = r.train.learning_rate;
    j["lr_decay"] = r.train.lr_decay;
    j["lambda_sparse"] = r.train.lambda_sparse;
    j["seed"] = r.train.seed;
    j["early_stop_patience"] = r.train.early_stop_patience;
    j["val_fraction"] = r.train.val_fraction;
    if (r.train.resample) j["resample"] = {{"floor_fraction", r.train.resample->floor_fraction}};
    if (r.pretrain_enabled)
        j["pretrain"] = {{"epochs", r.pretrain.epochs},
                         {"batch_size", r.pretrain.batch_size},
                         {"virtual_batch", r.pretrain.virtual_batch},
                         {"learning_rate", r.pretrain.learning_rate},
                         {"lr_decay", r.pretrain.lr_decay},
                         {"p_s", r.pretrain.p_s},
                         {"holdout_fraction", r.pretrain.holdout_fraction},
                         {"decoder_layers", r.pretrain.decoder_layers}};
    j["encoder"] = {{"n_steps", r.train.encoder.n_steps},
                    {"n_d", r.train.encoder.n_d},
                    {"n_a", r.train.encoder.n_a},
                    {"gamma", r.train.encoder.gamma},
                    {"shared_layers", r.train.encoder.shared_layers},
                    {"step_layers", r.train.encoder.step_layers},
                    {"final_bias", r.train.encoder.final_bias}};
    return j.dump();
}

void print_run_log(const Resolved& r, std::ostream& os) {
    auto src = [&](const std::string& key) {
        auto it = r.source.find(key);
        return it == r.source.end() ? std::string("default") : it->second;
    };
    os << "resolved configuration:\n";
    os << "  epochs = " << r.train.epochs << "  (" << src("epochs") << ")\n";
    os << "  batch_size = " << r.train.batch_size << "  (" << src("batch_size") << ")\n";
    os << "  virtual_batch = " << r.train.virtual_batch << "  (" << src("virtual_batch") << ")\n";
    os << "  learning_rate = " << r.train.learning_rate << "  (" << src("learning_rate") << ")\n";
    os << "  lr_decay = " << r.train.lr_decay << "  (" << src("lr_decay") << ")\n";
    os << "  lambda_sparse = " << r.train.lambda_sparse << "  (" << src("lambda_sparse") << ")\n";
    os << "  seed = " << r.train.seed << "  (" << src("seed") << ")\n";
    os << "  early_stop_patience = " << r.train.early_stop_patience << "  ("
       << src("early_stop_patience") << ")\n";
    os << "  val_fraction = " << r.train.val_fraction << "  (" << src("val_fraction") << ")\n";
    os << "  resample = " << (r.train.resample ? "on" : "off");
    if (r.train.resample) os << " (floor_fraction " << r.train.resample->floor_fraction << ")";
    os << "  (" << src("resample") << ")\n";
    os << "  pretrain = " << (r.pretrain_enabled ? "on" : "off") << "  (" << src("pretrain")
       << ")\n";
    os << "  encoder.n_steps = " << r.train.encoder.n_steps << "  (" << src("encoder.n_steps")
       << ")\n";
    os << "  encoder.n_d = " << r.train.encoder.n_d << "  (" << src("encoder.n_d") << ")\n";
    os << "  encoder.n_a = " << r.train.encoder.n_a << "  (" << src("encoder.n_a") << ")\n";
    os << "  encoder.gamma = " << r.train.encoder.gamma << "  (" << src("encoder.gamma")
       << ")\n";
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + p.string());
    os << text;
    if (!os.flush()) throw IoError("failed writing " + p.string());
}

void print_class_counts(const fusion::FusedDataset& ds, std::ostream& os) {
    auto counts = ds.class_counts();
    os << "rows: " << ds.rows() << ", features: " << ds.cols() << "\n";
    for (std::size_t c = 0; c < fusion::kNumClasses; ++c)
        os << "  " << fusion::to_string(static_cast<fusion::ThreatClass>(c)) << ": "
           << counts[c] << "\n";
    os << "schema fingerprint: " << ds.schema.fingerprint() << "\n";
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

int cmd_fuse(const std::string& ids_path, const std::string& ueba_path,
             const std::string& schema_path, const std::string& stats_from,
             const std::string& out_path, std::uint64_t seed, double test_fraction,
             const std::string& test_out) {
    fusion::FusionSchema schema;
    if (!stats_from.empty()) {
        schema = fusion::load_dataset(stats_from).schema;
        if (!schema.fitted())
            throw ConfigError("--stats-from dataset has no fitted statistics");
    } else if (!schema_path.empty()) {
        schema = fusion::FusionSchema::load(schema_path);
    } else {
        schema = fusion::default_fusion_schema();
    }

    auto ids_in = io::open_in(ids_path);
    auto ids = fusion::parse_ids_records(ids_in, schema);
    auto ueba_in = io::open_in(ueba_path);
    auto ueba = fusion::parse_ueba_records(ueba_in, schema);

    if (test_fraction > 0.0 && test_out.empty())
        throw UsageError("--test-fraction requires --test-out");

    fusion::HarmonizeOptions opts;
    std::vector<char> stats_mask;
    if (test_fraction > 0.0 && !schema.fitted()) {
        // Fit statistics on the training rows only, so the held-out slice
        // never leaks into the frozen encodings.
        std::vector<int> labels;
        labels.reserve(ids.size() + ueba.size());
        for (const auto& r : ids)
            labels.push_back(static_cast<int>(
                fusion::map_label(r.raw_label, fusion::RecordSource::ids, schema)));
        for (const auto& r : ueba)
            labels.push_back(static_cast<int>(
                fusion::map_label(r.raw_label, fusion::RecordSource::ueba, schema)));
        auto test_mask = fusion::stratified_test_mask(labels, test_fraction, seed);
        stats_mask.resize(test_mask.size());
        for (std::size_t i = 0; i < test_mask.size(); ++i) stats_mask[i] = !test_mask[i];
        opts.stats_mask = &stats_mask;
    }

    fusion::FusedDataset fused = fusion::harmonize(ids, ueba, schema, opts);

    if (test_fraction > 0.0) {
        std::vector<std::string> warnings;
        auto [train, test] = fusion::split(fused, test_fraction, seed, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        fusion::save_dataset(train, out_path);
        fusion::save_dataset(test, test_out);
        std::cout << "train split -> " << out_path << "\n";
        print_class_counts(train, std::cout);
        std::cout << "test split -> " << test_out << "\n";
        print_class_counts(test, std::cout);
    } else {
        fusion::save_dataset(fused, out_path);
        std::cout << "fused dataset -> " << out_path << "\n";
        print_class_counts(fused, std::cout);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& data_path, const std::string& out_path, const Resolved& r) {
    fusion::FusedDataset data = fusion::load_dataset(data_path);

    print_run_log(r, std::cout);
    std::string echo = config_echo_json(r);

    model_io::ModelBundle bundle;
    bundle.schema = data.schema;
    bundle.seed = r.train.seed;
    bundle.config_echo = echo;

    const encoder::TabnetParams* warm = nullptr;
    encoder::TabnetParams pre_params;
    if (r.pretrain_enabled) {
        std::cout << "pretraining (masked reconstruction), " << r.pretrain.epochs
                  << " epochs...\n";
        auto pre = decoder::pretrain(data.features, r.train.encoder, r.pretrain, r.train.seed);
        for (std::size_t e = 0; e < pre.holdout_losses.size(); ++e)
            std::cout << "  pretrain epoch " << (e + 1) << "  holdout loss "
                      << pre.holdout_losses[e] << "\n";
        if (pre.diverged) {
            bundle.phase = {true, false};
            bundle.model = encoder::TabnetModel(r.train.encoder, data.cols(), r.train.seed);
            bundle.model.params = pre.params;
            model_io::save_model(bundle, out_path + ".failed");
            std::cerr << "pretraining diverged (non-finite reconstruction loss); last finite "
                         "checkpoint kept at "
                      << out_path << ".failed\n";
            throw TrainingDivergedError("pretraining loss went non-finite");
        }
        pre_params = std::move(pre.params);
        warm = &pre_params;
        bundle.phase.pretrained = true;
    }

    auto res = training::train(data, r.train, warm);
    for (const auto& log : res.log) {
        std::cout << "epoch " << log.epoch << "  loss " << log.train_loss;
        if (log.val_macro_f1 >= 0.0) std::cout << "  val macro-F1 " << log.val_macro_f1;
        std::cout << "  lr " << log.lr << "\n";
    }
    if (res.early_stopped) std::cout << "early stop: no validation improvement\n";

    bundle.model = std::move(res.model);
    if (res.diverged) {
        bundle.phase.supervised = false;
        model_io::save_model(bundle, out_path + ".failed");
        std::cerr << "training diverged: " << res.divergence_info
                  << "; last finite checkpoint kept at " << out_path << ".failed\n";
        throw TrainingDivergedError(res.divergence_info);
    }
    bundle.phase.supervised = true;
    model_io::save_model(bundle, out_path);
    std::cout << "model -> " << out_path << "  (best epoch " << res.best_epoch << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& reference, const std::string& out_dir) {
    auto bundle = model_io::load_model(model_path);
    auto data = fusion::load_dataset(data_path);
    model_io::require_same_schema(bundle, data.schema);
    if (!bundle.phase.supervised)
        throw UsageError("model at " + model_path + " has not completed supervised training");

    auto report = training::evaluate(bundle.model, data);
    std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
    std::filesystem::create_directories(dir);
    std::string text = metrics::format_text(report);
    write_text_file(dir / "metrics.txt", text);
    write_text_file(dir / "metrics.json", metrics::to_json_string(report) + "\n");
    write_text_file(dir / "plot_data.csv", metrics::plot_data(report));
    std::cout << text;

    if (!reference.empty()) {
        const auto& ref = metrics::reference_table(reference);
        auto delta = metrics::compare_report(report, ref);
        std::string dtext = metrics::format_delta_text(delta, ref);
        write_text_file(dir / "delta.txt", dtext);
        write_text_file(dir / "delta.json", metrics::delta_to_json_string(delta, ref) + "\n");
        std::cout << "\n" << dtext;
    }
    std::cout << "reports -> " << dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

int cmd_explain(const std::string& model_path, const std::string& data_path, std::size_t top_k,
                const std::string& out_prefix) {
    auto bundle = model_io::load_model(model_path);
    auto data = fusion::load_dataset(data_path);
    model_io::require_same_schema(bundle, data.schema);
    if (!bundle.phase.supervised)
        throw UsageError("model at " + model_path + " has not completed supervised training");

    auto rep = explain::explain(bundle.model, data.features, top_k);
    auto [pred, probs] = training::predict(bundle.model, data.features);
    (void)probs;
    auto names = data.schema.fused_names();

    std::ostringstream samples;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        samples << "sample " << r;
        if (data.labels[r] >= 0)
            samples << "  true="
                    << fusion::to_string(static_cast<fusion::ThreatClass>(data.labels[r]));
        samples << "  predicted=" << fusion::to_string(pred[r]);
        if (rep.degenerate[r]) {
            samples << "  [degenerate: all steps carried zero weight]\n";
            continue;
        }
        samples << "  top" << top_k << ":";
        for (const auto& [idx, w] : rep.top_features[r]) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", w);
            samples << " " << names[idx] << "=" << buf;
        }
        samples << "\n";
    }

    std::ostringstream global;
    global << "feature,importance\n";
    for (std::size_t j = 0; j < names.size(); ++j)
        global << names[j] << "," << rep.global_importance[j] << "\n";

    std::ostringstream magg;
    magg << "sample";
    for (const auto& n : names) magg << "," << n;
    magg << "\n";
    for (std::size_t r = 0; r < rep.m_agg.rows; ++r) {
        magg << r;
        for (std::size_t j = 0; j < rep.m_agg.cols; ++j) magg << "," << rep.m_agg.at(r, j);
        magg << "\n";
    }

    std::string prefix = out_prefix.empty() ? "explain" : out_prefix;
    write_text_file(prefix + "_samples.txt", samples.str());
    write_text_file(prefix + "_global.csv", global.str());
    write_text_file(prefix + "_magg.csv", magg.str());

    std::cout << "explained " << data.rows() << " samples; " << rep.degenerate_count
              << " degenerate rows\n";
    std::vector<std::size_t> order(names.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rep.global_importance[a] != rep.global_importance[b])
            return rep.global_importance[a] > rep.global_importance[b];
        return a < b;
    });
    std::cout << "top global features:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(top_k, order.size()); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", rep.global_importance[order[i]]);
        std::cout << "  " << names[order[i]] << "  " << buf << "\n";
    }
    std::cout << "reports -> " << prefix << "_{samples.txt,global.csv,magg.csv}\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct InputLine {
    std::size_t lineno = 0;
    std::string text;
};

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& format, const std::string& out_path) {
    if (format != "csv" && format != "jsonl")
        throw UsageError("--format must be csv or jsonl, got \"" + format + "\"");
    auto bundle = model_io::load_model(model_path);
    if (!bundle.phase.supervised)
        throw UsageError("model at " + model_path + " has not completed supervised training");
    const auto& schema = bundle.schema;

    std::ifstream in(input_path);
    if (!in) throw IoError("cannot open for reading: " + input_path);
    std::vector<InputLine> lines;
    {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = line;
            while (!t.empty() && (t.back() == '\r' || t.back() == ' ' || t.back() == '\t'))
                t.pop_back();
            if (t.empty()) continue;
            lines.push_back({lineno, t});
        }
    }
    if (lines.empty()) {
        std::cerr << "input file " << input_path << " holds no records\n";
        return 2;
    }

    // Sniff the source: JSON-lines or headered UEBA CSV parse as UEBA,
    // headerless 41-column rows parse as IDS flows.
    bool jsonl = lines.front().text.front() == '{';
    bool ueba_csv = false;
    std::string header;
    if (!jsonl) {
        std::istringstream probe(lines.front().text);
        std::string field;
        while (std::getline(probe, field, ',')) {
            for (const auto& c : schema.ueba_columns)
                if (field == c.name) ueba_csv = true;
        }
        if (ueba_csv) header = lines.front().text;
    }

    struct Outcome {
        std::size_t lineno = 0;
        bool ok = false;
        bool is_ueba = false;
        std::string error;
        std::size_t record_index = 0; // within its source bucket
    };
    std::vector<Outcome> outcomes;
    std::vector<fusion::RawRecord> ids, ueba;

    std::size_t first_data = ueba_csv ? 1 : 0;
    for (std::size_t i = first_data; i < lines.size(); ++i) {
        Outcome o;
        o.lineno = lines[i].lineno;
        try {
            std::vector<fusion::RawRecord> recs;
            if (jsonl) {
                std::istringstream ss(lines[i].text);
                recs = fusion::parse_ueba_records(ss, schema, false);
            } else if (ueba_csv) {
                std::istringstream ss(header + "\n" + lines[i].text);
                recs = fusion::parse_ueba_records(ss, schema, false);
            } else {
                std::istringstream ss(lines[i].text);
                recs = fusion::parse_ids_records(ss, schema, false);
            }
            if (recs.size() != 1) throw ParseError(o.lineno, "expected one record");
            o.ok = true;
            o.is_ueba = recs[0].source == fusion::RecordSource::ueba;
            if (o.is_ueba) {
                o.record_index = ueba.size();
                ueba.push_back(std::move(recs[0]));
            } else {
                o.record_index = ids.size();
                ids.push_back(std::move(recs[0]));
            }
        } catch (const Error& e) {
            o.error = e.what();
        }
        outcomes.push_back(std::move(o));
    }

    std::ostream* out = &std::cout;
    std::ofstream out_file;
    if (!out_path.empty()) {
        out_file.open(out_path, std::ios::trunc);
        if (!out_file) throw IoError("cannot open for writing: " + out_path);
        out = &out_file;
    }

    const std::size_t ok_count = ids.size() + ueba.size();
    std::vector<fusion::ThreatClass> labels;
    Tensor2 probs;
    if (ok_count > 0) {
        fusion::HarmonizeOptions opts;
        opts.allow_unlabeled = true;
        fusion::FusedDataset ds = fusion::harmonize(ids, ueba, schema, opts);
        std::tie(labels, probs) = training::predict(bundle.model, ds.features);
    }
    const std::size_t n_ids = ids.size();

    if (format == "csv")
        *out << "line,prediction,p_benign,p_dos,p_malicious,p_normal,p_probe,p_r2l,p_u2r\n";
    for (const auto& o : outcomes) {
        if (!o.ok) {
            if (format == "csv") {
                std::string msg = o.error;
                for (char& ch : msg)
                    if (ch == ',' || ch == '\n') ch = ';';
                *out << o.lineno << ",error," << msg << "\n";
            } else {
                json j;
                j["line"] = o.lineno;
                j["error"] = o.error;
                *out << j.dump() << "\n";
            }
            continue;
        }
        // IDS records sit before UEBA records in the harmonized batch.
        std::size_t row = o.is_ueba ? n_ids + o.record_index : o.record_index;
        if (format == "csv") {
            *out << o.lineno << "," << fusion::to_string(labels[row]);
            for (std::size_t c = 0; c < probs.cols; ++c) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", probs.at(row, c));
                *out << "," << buf;
            }
            *out << "\n";
        } else {
            json j;
            j["line"] = o.lineno;
            j["class"] = fusion::to_string(labels[row]);
            json pr = json::array();
            for (std::size_t c = 0; c < probs.cols; ++c) pr.push_back(probs.at(row, c));
            j["probabilities"] = pr;
            *out << j.dump() << "\n";
        }
    }
    if (!out_path.empty() && !out_file.flush())
        throw IoError("failed writing " + out_path);

    if (ok_count == 0) {
        std::cerr << "no input line parsed under the model schema\n";
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// datagen / schema dump
// ---------------------------------------------------------------------------

int cmd_datagen(const std::string& ids_out, const std::string& ueba_out,
                const synth::SynthConfig& cfg) {
    {
        auto os = io::open_out(ids_out);
        synth::write_ids_csv(os, cfg);
        if (!os.flush()) throw IoError("failed writing " + ids_out);
    }
    {
        auto os = io::open_out(ueba_out);
        synth::write_ueba_csv(os, cfg);
        if (!os.flush()) throw IoError("failed writing " + ueba_out);
    }
    std::cout << "flow records -> " << ids_out << " (" << cfg.ids_rows << " rows)\n";
    std::cout << "behavior records -> " << ueba_out << " (" << cfg.ueba_rows << " rows)\n";
    return 0;
}

int cmd_schema(const std::string& out_path) {
    auto schema = fusion::default_fusion_schema();
    if (out_path.empty()) {
        std::cout << schema.to_json() << "\n";
    } else {
        schema.save(out_path);
        std::cout << "schema -> " << out_path << "\n";
    }
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"tabular intrusion & insider-threat detector"};
    app.require_subcommand(1);

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse flow + behavior records into a dataset");
    std::string f_ids, f_ueba, f_schema, f_stats_from, f_out, f_test_out;
    std::uint64_t f_seed = 1;
    double f_test_fraction = 0.0;
    fuse->add_option("--ids", f_ids, "flow records CSV (41 columns + label)")->required();
    fuse->add_option("--ueba", f_ueba, "behavior records CSV/JSONL")->required();
    fuse->add_option("--schema", f_schema, "schema JSON (default: built-in)");
    fuse->add_option("--stats-from", f_stats_from,
                     "reuse the fitted statistics of an existing dataset");
    fuse->add_option("--out", f_out, "output dataset path")->required();
    fuse->add_option("--seed", f_seed, "split seed");
    fuse->add_option("--test-fraction", f_test_fraction,
                     "carve a stratified test split of this fraction");
    fuse->add_option("--test-out", f_test_out, "test split output path");

    // train
    auto* train = app.add_subcommand("train", "train a model on a fused dataset");
    std::string t_data, t_out, t_config;
    train->add_option("--data", t_data, "fused dataset")->required();
    train->add_option("--out", t_out, "output model path")->required();
    train->add_option("--config", t_config, "training config JSON");
    std::uint64_t t_seed = 0;
    std::size_t t_epochs = 0, t_batch = 0, t_vbatch = 0, t_patience = 0;
    std::size_t t_nsteps = 0, t_nd = 0, t_na = 0, t_pre_epochs = 0;
    double t_lr = 0, t_decay = 0, t_lambda = -1, t_valfrac = -1, t_gamma = 0, t_floor = 0;
    bool t_pretrain = false, t_resample = false;
    auto* o_seed = train->add_option("--seed", t_seed, "training seed");
    auto* o_epochs = train->add_option("--epochs", t_epochs, "supervised epochs");
    auto* o_batch = train->add_option("--batch-size", t_batch, "mini-batch size");
    auto* o_vbatch = train->add_option("--virtual-batch", t_vbatch, "ghost BN chunk size");
    auto* o_lr = train->add_option("--lr", t_lr, "initial learning rate");
    auto* o_decay = train->add_option("--lr-decay", t_decay, "per-epoch decay");
    auto* o_lambda = train->add_option("--lambda-sparse", t_lambda, "sparsity weight");
    auto* o_patience = train->add_option("--patience", t_patience, "early-stop patience");
    auto* o_valfrac = train->add_option("--val-fraction", t_valfrac, "validation fraction");
    auto* o_nsteps = train->add_option("--n-steps", t_nsteps, "decision steps");
    auto* o_nd = train->add_option("--n-d", t_nd, "decision width");
    auto* o_na = train->add_option("--n-a", t_na, "attention width");
    auto* o_gamma = train->add_option("--gamma", t_gamma, "prior relaxation");
    auto* o_pretrain = train->add_flag("--pretrain", t_pretrain, "masked-reconstruction phase");
    auto* o_pre_epochs = train->add_option("--pretrain-epochs", t_pre_epochs, "pretrain epochs");
    auto* o_resample = train->add_flag("--resample", t_resample, "oversample rare classes");
    auto* o_floor = train->add_option("--floor-fraction", t_floor,
                                      "rare-class floor as a fraction of the majority");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a model on a fused dataset");
    std::string e_model, e_data, e_reference, e_outdir;
    evaluate->add_option("--model", e_model, "model artifact")->required();
    evaluate->add_option("--data", e_data, "fused dataset")->required();
    evaluate->add_option("--reference", e_reference, "published table for the delta report");
    evaluate->add_option("--out-dir", e_outdir, "report directory (default .)");

    // explain
    auto* explain_cmd = app.add_subcommand("explain", "feature-importance report");
    std::string x_model, x_data, x_out;
    std::size_t x_topk = 5;
    explain_cmd->add_option("--model", x_model, "model artifact")->required();
    explain_cmd->add_option("--data", x_data, "fused dataset")->required();
    explain_cmd->add_option("--top-k", x_topk, "features per sample (default 5)");
    explain_cmd->add_option("--out", x_out, "output prefix (default explain)");

    // predict
    auto* predict = app.add_subcommand("predict", "score raw records line by line");
    std::string p_model, p_input, p_format = "csv", p_out;
    predict->add_option("--model", p_model, "model artifact")->required();
    predict->add_option("--input", p_input, "raw records (flow CSV, UEBA CSV, or JSONL)")
        ->required();
    predict->add_option("--format", p_format, "csv or jsonl (default csv)");
    predict->add_option("--out", p_out, "write predictions here instead of stdout");

    // datagen
    auto* datagen = app.add_subcommand("datagen", "generate a seeded benchmark corpus");
    std::string g_ids, g_ueba;
    synth::SynthConfig g_cfg;
    datagen->add_option("--ids", g_ids, "flow records output path")->required();
    datagen->add_option("--ueba", g_ueba, "behavior records output path")->required();
    datagen->add_option("--seed", g_cfg.seed, "generator seed");
    datagen->add_option("--ids-rows", g_cfg.ids_rows, "flow record count");
    datagen->add_option("--ueba-rows", g_cfg.ueba_rows, "behavior record count");

    // schema
    auto* schema_cmd = app.add_subcommand("schema", "dump the built-in schema as JSON");
    std::string s_out;
    schema_cmd->add_option("--out", s_out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fuse->parsed())
            return cmd_fuse(f_ids, f_ueba, f_schema, f_stats_from, f_out, f_seed,
                            f_test_fraction, f_test_out);
        if (train->parsed()) {
            Resolved r;
            if (!t_config.empty()) apply_config_file(r, t_config);
            auto cli_set = [&](const CLI::Option* o) { return o->count() > 0; };
            if (cli_set(o_seed)) { r.train.seed = t_seed; r.note("seed", "cli"); }
            if (cli_set(o_epochs)) { r.train.epochs = t_epochs; r.note("epochs", "cli"); }
            if (cli_set(o_batch)) { r.train.batch_size = t_batch; r.note("batch_size", "cli"); }
            if (cli_set(o_vbatch)) { r.train.virtual_batch = t_vbatch; r.note("virtual_batch", "cli"); }
            if (cli_set(o_lr)) { r.train.learning_rate = t_lr; r.note("learning_rate", "cli"); }
            if (cli_set(o_decay)) { r.train.lr_decay = t_decay; r.note("lr_decay", "cli"); }
            if (cli_set(o_lambda)) { r.train.lambda_sparse = t_lambda; r.note("lambda_sparse", "cli"); }
            if (cli_set(o_patience)) { r.train.early_stop_patience = t_patience; r.note("early_stop_patience", "cli"); }
            if (cli_set(o_valfrac)) { r.train.val_fraction = t_valfrac; r.note("val_fraction", "cli"); }
            if (cli_set(o_nsteps)) { r.train.encoder.n_steps = t_nsteps; r.note("encoder.n_steps", "cli"); }
            if (cli_set(o_nd)) { r.train.encoder.n_d = t_nd; r.note("encoder.n_d", "cli"); }
            if (cli_set(o_na)) { r.train.encoder.n_a = t_na; r.note("encoder.n_a", "cli"); }
            if (cli_set(o_gamma)) { r.train.encoder.gamma = t_gamma; r.note("encoder.gamma", "cli"); }
            if (cli_set(o_pretrain)) { r.pretrain_enabled = t_pretrain; r.note("pretrain", "cli"); }
            if (cli_set(o_pre_epochs)) {
                r.pretrain.epochs = t_pre_epochs;
                r.pretrain_enabled = true;
                r.note("pretrain", "cli");
            }
            if (cli_set(o_resample)) {
                if (!r.train.resample) r.train.resample = fusion::ResampleSpec{};
                r.note("resample", "cli");
            }
            if (cli_set(o_floor)) {
                if (!r.train.resample) r.train.resample = fusion::ResampleSpec{};
                r.train.resample->floor_fraction = t_floor;
                r.note("resample", "cli");
            }
            return cmd_train(t_data, t_out, r);
        }
        if (evaluate->parsed()) return cmd_evaluate(e_model, e_data, e_reference, e_outdir);
        if (explain_cmd->parsed()) return cmd_explain(x_model, x_data, x_topk, x_out);
        if (predict->parsed()) return cmd_predict(p_model, p_input, p_format, p_out);
        if (datagen->parsed()) return cmd_datagen(g_ids, g_ueba, g_cfg);
        if (schema_cmd->parsed()) return cmd_schema(s_out);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const FingerprintMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const TrainingDivergedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace tabitd::cli
