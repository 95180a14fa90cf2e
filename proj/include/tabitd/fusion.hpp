#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tabitd/tensor.hpp"

namespace tabitd::fusion {

// ---------------------------------------------------------------------------
// Classes and raw records
// ---------------------------------------------------------------------------

/// The unified 7-class label set. Numeric values are the model's class
/// indices and the on-disk label codes; never reorder.
enum class ThreatClass : int {
    Benign = 0,
    DoS = 1,
    Malicious = 2,
    Normal = 3,
    Probe = 4,
    R2L = 5,
    U2R = 6,
};

inline constexpr std::size_t kNumClasses = 7;

const char* to_string(ThreatClass c);
ThreatClass threat_class_from_string(const std::string& s);
/// Benign/Malicious come only from UEBA records; the other five only from IDS.
bool class_allowed_for_source(ThreatClass c, bool is_ids);

enum class RecordSource { ids, ueba };
enum class ColumnKind { continuous, categorical };

using RawValue = std::variant<double, std::string>;

struct RawRecord {
    RecordSource source;
    std::vector<RawValue> values; // ordered per the source's column list
    std::string raw_label;
};

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;

    bool operator==(const ColumnSpec&) const = default;
};

/// One fused-matrix column with its frozen encoding statistics.
struct FittedColumn {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    bool from_ids = false;
    bool from_ueba = false;
    bool indicator = false; // the source-indicator column
    // continuous: frozen z-score statistics (std_denom is 1 for constant columns)
    double mean = 0.0;
    double std_denom = 1.0;
    // categorical: sorted vocabulary; values outside it code to vocab.size()
    std::vector<std::string> vocab;

    std::size_t cardinality() const {
        if (indicator) return 2;
        return vocab.size() + 1;
    }

    bool operator==(const FittedColumn&) const = default;
};

/// Column layout + label maps for both sources, plus (after harmonize) the
/// frozen per-column encoding statistics. Serialized as canonical JSON; the
/// fingerprint of that JSON gates model/dataset compatibility.
struct FusionSchema {
    int schema_version = 1;
    std::vector<ColumnSpec> ids_columns;
    std::vector<ColumnSpec> ueba_columns;
    std::map<std::string, ThreatClass> label_map_ids;
    std::map<std::string, ThreatClass> label_map_ueba;
    std::vector<FittedColumn> fused_columns; // empty until fitted

    bool fitted() const { return !fused_columns.empty(); }
    /// |ids_columns ∪ ueba_columns| + 1 (source indicator).
    std::size_t fused_width() const;
    std::vector<std::string> fused_names() const;

    /// Checks structural invariants (no duplicate/reserved names, label maps
    /// consistent with their source). Throws SchemaError.
    void validate() const;

    std::string to_json() const; // canonical: sorted keys, no whitespace
    static FusionSchema from_json(const std::string& text);
    static FusionSchema load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::uint64_t fingerprint() const; // FNV-1a over canonical JSON

    bool operator==(const FusionSchema&) const = default;
};

/// KDD/NSL-KDD 41-column layout + standard attack taxonomy, and the generic
/// UEBA behavior schema used by the synthetic generator.
FusionSchema default_fusion_schema();

// ---------------------------------------------------------------------------
// Fused dataset
// ---------------------------------------------------------------------------

struct FusedDataset {
    Tensor2 features;
    std::vector<int> labels; // ThreatClass codes, one per row
    FusionSchema schema;

    std::size_t rows() const { return features.rows; }
    std::size_t cols() const { return features.cols; }
    std::array<std::size_t, kNumClasses> class_counts() const;
};

// ---------------------------------------------------------------------------
// Parsing and label mapping
// ---------------------------------------------------------------------------

/// Headerless CSV, 41 feature fields + label (+ optional trailing difficulty
/// field, ignored). A trailing '.' on the label (KDDCup99 style) is stripped.
/// With require_label=false, label-less rows (exactly 41 fields) are accepted
/// and no label validation happens (the prediction path).
std::vector<RawRecord> parse_ids_records(std::istream& in, const FusionSchema& schema,
                                         bool require_label = true);

/// CSV with a header row naming every UEBA column plus "label", or JSON-lines
/// (one object per line, keys = column names + "label"). Labels are checked
/// against the schema's UEBA label map as they are read. With
/// require_label=false the label column/key may be absent and labels are not
/// validated (the prediction path).
std::vector<RawRecord> parse_ueba_records(std::istream& in, const FusionSchema& schema,
                                          bool require_label = true);

ThreatClass map_label(const std::string& raw, RecordSource source, const FusionSchema& schema);

// ---------------------------------------------------------------------------
// Harmonization
// ---------------------------------------------------------------------------

struct HarmonizeOptions {
    /// Rows (IDS records first, then UEBA, in input order) whose values feed
    /// the frozen normalization statistics and categorical vocabularies.
    /// Null means every row. Ignored when the schema is already fitted.
    const std::vector<char>* stats_mask = nullptr;
    /// Prediction path: records with empty or unmappable labels get label -1
    /// instead of raising. Off by default so training data stays strict.
    bool allow_unlabeled = false;
};

/// Builds the fused matrix: union of columns, zero-fill for source-absent
/// cells, source-indicator column last, z-scored continuous columns,
/// integer-coded categoricals. If schema is already fitted, its frozen
/// statistics are applied unchanged (for leak-free test-set encoding).
FusedDataset harmonize(const std::vector<RawRecord>& ids, const std::vector<RawRecord>& ueba,
                       const FusionSchema& schema, const HarmonizeOptions& opts = {});

// ---------------------------------------------------------------------------
// Resampling and splitting
// ---------------------------------------------------------------------------

struct ResampleSpec {
    /// Every class present is oversampled (with replacement) until its count
    /// reaches at least floor_fraction × majority-class count.
    double floor_fraction = 0.5;
};

FusedDataset resample(const FusedDataset& data, const ResampleSpec& spec, std::uint64_t seed);

/// Per-class deterministic test selection: true marks a test row. Classes
/// with a single sample stay in train (a warning is appended if given).
std::vector<char> stratified_test_mask(const std::vector<int>& labels, double fraction,
                                       std::uint64_t seed,
                                       std::vector<std::string>* warnings = nullptr);

std::pair<FusedDataset, FusedDataset> split(const FusedDataset& data, double test_fraction,
                                            std::uint64_t seed,
                                            std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Dataset container (magic "TITD", version, schema JSON, matrix, labels)
// ---------------------------------------------------------------------------

void write_dataset(std::ostream& os, const FusedDataset& ds);
FusedDataset read_dataset(std::istream& is);
void save_dataset(const FusedDataset& ds, const std::filesystem::path& path);
FusedDataset load_dataset(const std::filesystem::path& path);

} // namespace tabitd::fusion
