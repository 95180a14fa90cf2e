#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabitd/fusion.hpp"

namespace tabitd::metrics {

inline constexpr std::size_t kNumClasses = fusion::kNumClasses;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool applicable = true; // false when the class is in neither truth nor prediction
};

struct MetricsReport {
    // confusion[true][predicted]
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};
    std::array<ClassMetrics, kNumClasses> per_class{};
    double accuracy = 0.0;
    // Binary roll-up with {Normal, Benign} as the negative set and the five
    // attack classes as the positive set. FNR = 1 - DR by definition. An empty
    // positive (resp. negative) side gives the vacuous DR = 1 (resp. FAR = 0).
    double detection_rate = 1.0;
    double false_alarm_rate = 0.0;
    double false_negative_rate = 0.0;
    // Macro averages over applicable classes only.
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::uint64_t total = 0;
};

/// Builds the full report from aligned truth/prediction label vectors
/// (ThreatClass codes 0..6).
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted);

/// Same, starting from a prebuilt confusion matrix.
MetricsReport metrics_from_confusion(
    const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& confusion);

std::string format_text(const MetricsReport& r);
std::string to_json_string(const MetricsReport& r);
/// CSV lines "metric,class,value" consumable by any plotting tool.
std::string plot_data(const MetricsReport& r);

// ---------------------------------------------------------------------------
// Published comparison tables (per-class precision/recall/F1 for four methods
// on the two benchmark corpora), bundled for delta reporting.
// ---------------------------------------------------------------------------

struct ReferenceTable {
    std::string name;    // e.g. "paper-ours-nsl-ueba"
    std::string method;  // Ours | XGBoost | LGBM | CatBoost
    std::string dataset; // NSL-UEBA | KDD-UEBA
    std::array<ClassMetrics, kNumClasses> per_class{};
    double average_accuracy = -1.0; // reported only for the Ours rows; -1 = unreported
};

const std::vector<ReferenceTable>& reference_tables();
/// Unknown name -> ConfigError listing the valid names.
const ReferenceTable& reference_table(const std::string& name);

struct DeltaRow {
    fusion::ThreatClass cls;
    double d_precision = 0.0;
    double d_recall = 0.0;
    double d_f1 = 0.0;
};

struct DeltaTable {
    std::string reference;            // table name
    double reference_avg_accuracy = -1.0;
    double ours_accuracy = 0.0;
    std::vector<DeltaRow> rows;       // ours - reference, one row per class
};

DeltaTable compare_report(const MetricsReport& ours, const ReferenceTable& ref);
std::string format_delta_text(const DeltaTable& d, const ReferenceTable& ref);
std::string delta_to_json_string(const DeltaTable& d, const ReferenceTable& ref);

} // namespace tabitd::metrics
