#include "tabitd/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tabitd/errors.hpp"

namespace tabitd::metrics {

using fusion::ThreatClass;
using nlohmann::json;

namespace {

constexpr bool is_benign(std::size_t cls) {
    return cls == static_cast<std::size_t>(ThreatClass::Benign) ||
           cls == static_cast<std::size_t>(ThreatClass::Normal);
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string fmt_delta(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.4f", v);
    return buf;
}

} // namespace

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size())
        throw DimensionError("metrics: " + std::to_string(truth.size()) + " truth labels vs " +
                             std::to_string(predicted.size()) + " predictions");
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        int t = truth[i];
        int p = predicted[i];
        if (t < 0 || t >= static_cast<int>(kNumClasses) || p < 0 ||
            p >= static_cast<int>(kNumClasses))
            throw ConfigError("metrics: label code out of range at row " + std::to_string(i));
        ++confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return metrics_from_confusion(confusion);
}

MetricsReport metrics_from_confusion(
    const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& confusion) {
    MetricsReport r;
    r.confusion = confusion;

    std::uint64_t trace = 0;
    std::array<std::uint64_t, kNumClasses> row_sum{}, col_sum{};
    for (std::size_t t = 0; t < kNumClasses; ++t)
        for (std::size_t p = 0; p < kNumClasses; ++p) {
            std::uint64_t n = confusion[t][p];
            r.total += n;
            row_sum[t] += n;
            col_sum[p] += n;
            if (t == p) trace += n;
        }
    if (r.total == 0) throw EmptyDatasetError("metrics: empty evaluation set");
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);

    std::size_t applicable = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& m = r.per_class[c];
        if (row_sum[c] == 0 && col_sum[c] == 0) {
            m.applicable = false;
            continue;
        }
        ++applicable;
        double tp = static_cast<double>(confusion[c][c]);
        m.precision = col_sum[c] > 0 ? tp / static_cast<double>(col_sum[c]) : 0.0;
        m.recall = row_sum[c] > 0 ? tp / static_cast<double>(row_sum[c]) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
    }
    if (applicable > 0) {
        r.macro_precision /= static_cast<double>(applicable);
        r.macro_recall /= static_cast<double>(applicable);
        r.macro_f1 /= static_cast<double>(applicable);
    }

    // Binary roll-up: attack rows detected as any attack class count as hits.
    std::uint64_t attack_tp = 0, attack_fn = 0, benign_fp = 0, benign_tn = 0;
    for (std::size_t t = 0; t < kNumClasses; ++t)
        for (std::size_t p = 0; p < kNumClasses; ++p) {
            std::uint64_t n = confusion[t][p];
            if (is_benign(t)) {
                if (is_benign(p))
                    benign_tn += n;
                else
                    benign_fp += n;
            } else {
                if (is_benign(p))
                    attack_fn += n;
                else
                    attack_tp += n;
            }
        }
    r.detection_rate = (attack_tp + attack_fn) > 0
                           ? static_cast<double>(attack_tp) /
                                 static_cast<double>(attack_tp + attack_fn)
                           : 1.0;
    r.false_alarm_rate = (benign_fp + benign_tn) > 0
                             ? static_cast<double>(benign_fp) /
                                   static_cast<double>(benign_fp + benign_tn)
                             : 0.0;
    r.false_negative_rate = 1.0 - r.detection_rate;
    return r;
}

std::string format_text(const MetricsReport& r) {
    std::ostringstream os;
    os << "samples: " << r.total << "\n";
    os << "accuracy: " << fmt4(r.accuracy) << "\n";
    os << "detection_rate: " << fmt4(r.detection_rate) << "\n";
    os << "false_alarm_rate: " << fmt4(r.false_alarm_rate) << "\n";
    os << "false_negative_rate: " << fmt4(r.false_negative_rate) << "\n";
    os << "macro_precision: " << fmt4(r.macro_precision) << "  macro_recall: "
       << fmt4(r.macro_recall) << "  macro_f1: " << fmt4(r.macro_f1) << "\n\n";
    os << "class        precision  recall  f1\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = r.per_class[c];
        os << fusion::to_string(static_cast<ThreatClass>(c));
        for (std::size_t pad = std::string(fusion::to_string(static_cast<ThreatClass>(c))).size();
             pad < 13; ++pad)
            os << ' ';
        if (!m.applicable) {
            os << "n/a        n/a     n/a\n";
            continue;
        }
        os << fmt4(m.precision) << "     " << fmt4(m.recall) << "  " << fmt4(m.f1) << "\n";
    }
    os << "\nconfusion (rows = true, cols = predicted):\n";
    for (std::size_t t = 0; t < kNumClasses; ++t) {
        for (std::size_t p = 0; p < kNumClasses; ++p) os << r.confusion[t][p] << (p + 1 < kNumClasses ? ' ' : '\n');
    }
    return os.str();
}

std::string to_json_string(const MetricsReport& r) {
    json j;
    j["samples"] = r.total;
    j["accuracy"] = r.accuracy;
    j["detection_rate"] = r.detection_rate;
    j["false_alarm_rate"] = r.false_alarm_rate;
    j["false_negative_rate"] = r.false_negative_rate;
    j["macro_precision"] = r.macro_precision;
    j["macro_recall"] = r.macro_recall;
    j["macro_f1"] = r.macro_f1;
    json per = json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = r.per_class[c];
        json e;
        if (m.applicable) {
            e["precision"] = m.precision;
            e["recall"] = m.recall;
            e["f1"] = m.f1;
        } else {
            e["applicable"] = false;
        }
        per[fusion::to_string(static_cast<ThreatClass>(c))] = e;
    }
    j["per_class"] = per;
    json conf = json::array();
    for (std::size_t t = 0; t < kNumClasses; ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < kNumClasses; ++p) row.push_back(r.confusion[t][p]);
        conf.push_back(row);
    }
    j["confusion"] = conf;
    return j.dump();
}

std::string plot_data(const MetricsReport& r) {
    std::ostringstream os;
    os << "metric,class,value\n";
    os << "accuracy,all," << fmt4(r.accuracy) << "\n";
    os << "detection_rate,all," << fmt4(r.detection_rate) << "\n";
    os << "false_alarm_rate,all," << fmt4(r.false_alarm_rate) << "\n";
    os << "false_negative_rate,all," << fmt4(r.false_negative_rate) << "\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = r.per_class[c];
        if (!m.applicable) continue;
        const char* name = fusion::to_string(static_cast<ThreatClass>(c));
        os << "precision," << name << "," << fmt4(m.precision) << "\n";
        os << "recall," << name << "," << fmt4(m.recall) << "\n";
        os << "f1," << name << "," << fmt4(m.f1) << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Bundled comparison tables
// ---------------------------------------------------------------------------

namespace {

ReferenceTable make_table(std::string name, std::string method, std::string dataset,
                          const double (&p)[kNumClasses], const double (&rec)[kNumClasses],
                          const double (&f1)[kNumClasses], double avg_acc = -1.0) {
    ReferenceTable t;
    t.name = std::move(name);
    t.method = std::move(method);
    t.dataset = std::move(dataset);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        t.per_class[c].precision = p[c];
        t.per_class[c].recall = rec[c];
        t.per_class[c].f1 = f1[c];
        t.per_class[c].applicable = true;
    }
    t.average_accuracy = avg_acc;
    return t;
}

// Class order everywhere: Benign, DoS, Malicious, Normal, Probe, R2L, U2R.
std::vector<ReferenceTable> build_tables() {
    std::vector<ReferenceTable> v;
    // NSL-UEBA corpus
    v.push_back(make_table("paper-xgboost-nsl-ueba", "XGBoost", "NSL-UEBA",
        {0.9534, 0.9405, 1.0000, 0.9255, 0.9456, 0.9286, 0.9303},
        {0.9625, 0.9507, 0.5000, 0.9331, 0.9479, 0.9592, 0.9565},
        {0.9572, 0.9557, 0.6667, 0.9333, 0.9474, 0.9441, 0.9778}));
    v.push_back(make_table("paper-lgbm-nsl-ueba", "LGBM", "NSL-UEBA",
        {0.9506, 0.9437, 0.3332, 0.9359, 0.9324, 0.9449, 0.4138},
        {0.9470, 0.9517, 0.3332, 0.9353, 0.9549, 0.9348, 0.5217},
        {0.9245, 0.9371, 0.3332, 0.9319, 0.8788, 0.9391, 0.4615}));
    v.push_back(make_table("paper-catboost-nsl-ueba", "CatBoost", "NSL-UEBA",
        {0.9413, 0.9315, 0.0000, 0.9208, 0.9365, 0.9510, 0.0000},
        {0.9786, 0.9508, 0.0000, 0.9553, 0.9393, 0.9790, 0.0000},
        {0.9357, 0.9599, 0.0000, 0.9276, 0.9372, 0.9648, 0.0000}));
    v.push_back(make_table("paper-ours-nsl-ueba", "Ours", "NSL-UEBA",
        {0.9639, 0.9699, 0.9642, 0.9658, 0.9668, 0.9520, 0.9615},
        {0.9542, 0.9691, 0.9700, 0.9696, 0.9651, 0.9685, 0.9137},
        {0.9590, 0.9695, 0.9671, 0.9677, 0.9660, 0.9602, 0.9370}, 0.9671));
    // KDD-UEBA corpus
    v.push_back(make_table("paper-xgboost-kdd-ueba", "XGBoost", "KDD-UEBA",
        {0.9209, 0.9325, 1.0000, 0.9498, 1.0000, 0.9955, 1.0000},
        {0.9559, 0.9294, 0.6667, 0.9300, 0.9241, 0.9822, 0.6000},
        {0.8872, 0.9558, 0.8000, 0.9285, 0.9215, 0.9888, 0.7500}));
    v.push_back(make_table("paper-lgbm-kdd-ueba", "LGBM", "KDD-UEBA",
        {0.9383, 0.9561, 0.0000, 0.9492, 0.9638, 0.8765, 0.0000},
        {0.9261, 0.9589, 0.0000, 0.9362, 0.9372, 0.9167, 0.0000},
        {0.9415, 0.9317, 0.0000, 0.9678, 0.9503, 0.9103, 0.0000}));
    v.push_back(make_table("paper-catboost-kdd-ueba", "CatBoost", "KDD-UEBA",
        {0.9494, 0.9697, 0.0000, 0.9694, 0.9684, 1.0000, 0.0000},
        {0.9693, 0.9697, 0.0000, 0.9700, 0.7810, 0.0844, 0.0000},
        {0.9592, 0.9697, 0.0000, 0.9697, 0.8765, 0.1557, 0.0000}));
    v.push_back(make_table("paper-ours-kdd-ueba", "Ours", "KDD-UEBA",
        {0.9600, 0.9811, 0.9522, 0.9300, 1.0000, 0.9594, 0.9599},
        {0.9732, 0.9661, 0.9400, 0.9689, 1.0000, 0.9997, 1.0000},
        {0.9693, 0.9680, 0.9310, 0.9695, 1.0000, 0.9996, 0.9549}, 0.9725));
    return v;
}

} // namespace

const std::vector<ReferenceTable>& reference_tables() {
    static const std::vector<ReferenceTable> tables = build_tables();
    return tables;
}

const ReferenceTable& reference_table(const std::string& name) {
    for (const auto& t : reference_tables())
        if (t.name == name) return t;
    std::string valid;
    for (const auto& t : reference_tables()) {
        if (!valid.empty()) valid += ", ";
        valid += t.name;
    }
    throw ConfigError("unknown reference table \"" + name + "\"; valid names: " + valid);
}

DeltaTable compare_report(const MetricsReport& ours, const ReferenceTable& ref) {
    DeltaTable d;
    d.reference = ref.name;
    d.reference_avg_accuracy = ref.average_accuracy;
    d.ours_accuracy = ours.accuracy;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        DeltaRow row;
        row.cls = static_cast<ThreatClass>(c);
        const auto& m = ours.per_class[c];
        const auto& rm = ref.per_class[c];
        row.d_precision = m.precision - rm.precision;
        row.d_recall = m.recall - rm.recall;
        row.d_f1 = m.f1 - rm.f1;
        d.rows.push_back(row);
    }
    return d;
}

std::string format_delta_text(const DeltaTable& d, const ReferenceTable& ref) {
    std::ostringstream os;
    os << "reference: " << d.reference << " (" << ref.method << " on " << ref.dataset << ")\n";
    if (d.reference_avg_accuracy >= 0.0)
        os << "reference average accuracy " << fmt4(d.reference_avg_accuracy)
           << " (published figure, aspirational reference only) vs ours "
           << fmt4(d.ours_accuracy) << "\n";
    os << "\nclass        ref_p    ref_r    ref_f1   d_precision  d_recall  d_f1\n";
    for (const auto& row : d.rows) {
        const char* name = fusion::to_string(row.cls);
        os << name;
        for (std::size_t pad = std::string(name).size(); pad < 13; ++pad) os << ' ';
        const auto& rm = ref.per_class[static_cast<std::size_t>(row.cls)];
        os << fmt4(rm.precision) << "   " << fmt4(rm.recall) << "   " << fmt4(rm.f1) << "   "
           << fmt_delta(row.d_precision) << "      " << fmt_delta(row.d_recall) << "   "
           << fmt_delta(row.d_f1) << "\n";
    }
    return os.str();
}

std::string delta_to_json_string(const DeltaTable& d, const ReferenceTable& ref) {
    json j;
    j["reference"] = d.reference;
    j["method"] = ref.method;
    j["dataset"] = ref.dataset;
    if (d.reference_avg_accuracy >= 0.0) {
        j["reference_average_accuracy"] = d.reference_avg_accuracy;
        j["reference_accuracy_note"] = "published figure, aspirational reference only";
    }
    j["ours_accuracy"] = d.ours_accuracy;
    json rows = json::object();
    for (const auto& row : d.rows) {
        const auto& rm = ref.per_class[static_cast<std::size_t>(row.cls)];
        json e;
        e["reference"] = {{"precision", rm.precision}, {"recall", rm.recall}, {"f1", rm.f1}};
        e["delta"] = {{"precision", row.d_precision}, {"recall", row.d_recall}, {"f1", row.d_f1}};
        rows[fusion::to_string(row.cls)] = e;
    }
    j["per_class"] = rows;
    return j.dump();
}

} // namespace tabitd::metrics
