#include "tabitd/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "tabitd/errors.hpp"
#include "tabitd/io.hpp"
#include "tabitd/rng.hpp"

namespace tabitd::fusion {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ThreatClass
// ---------------------------------------------------------------------------

const char* to_string(ThreatClass c) {
    switch (c) {
        case ThreatClass::Benign: return "Benign";
        case ThreatClass::DoS: return "DoS";
        case ThreatClass::Malicious: return "Malicious";
        case ThreatClass::Normal: return "Normal";
        case ThreatClass::Probe: return "Probe";
        case ThreatClass::R2L: return "R2L";
        case ThreatClass::U2R: return "U2R";
    }
    return "?";
}

ThreatClass threat_class_from_string(const std::string& s) {
    for (int i = 0; i < static_cast<int>(kNumClasses); ++i) {
        auto c = static_cast<ThreatClass>(i);
        if (s == to_string(c)) return c;
    }
    throw SchemaError("unknown threat class name: \"" + s + "\"");
}

bool class_allowed_for_source(ThreatClass c, bool is_ids) {
    bool ueba_class = (c == ThreatClass::Benign || c == ThreatClass::Malicious);
    return is_ids ? !ueba_class : ueba_class;
}

// ---------------------------------------------------------------------------
// Small text helpers
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kIndicatorName = "source";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

double parse_double(std::string_view raw, std::size_t lineno, const std::string& col) {
    std::string_view s = trim(raw);
    double v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError(lineno,
                         "column '" + col + "': not a number: \"" + std::string(s) + "\"");
    return v;
}

const char* kind_name(ColumnKind k) {
    return k == ColumnKind::continuous ? "continuous" : "categorical";
}

ColumnKind kind_from_name(const std::string& s) {
    if (s == "continuous") return ColumnKind::continuous;
    if (s == "categorical") return ColumnKind::categorical;
    throw SchemaError("unknown column kind: \"" + s + "\"");
}

/// The fused column layout implied by the declared source columns: IDS columns
/// in order, then UEBA-only columns, then the source indicator. Shared names
/// must agree on kind and become two-source columns.
std::vector<FittedColumn> union_layout(const FusionSchema& s) {
    std::vector<FittedColumn> cols;
    cols.reserve(s.ids_columns.size() + s.ueba_columns.size() + 1);
    for (const auto& c : s.ids_columns) {
        FittedColumn f;
        f.name = c.name;
        f.kind = c.kind;
        f.from_ids = true;
        cols.push_back(std::move(f));
    }
    for (const auto& c : s.ueba_columns) {
        auto it = std::find_if(cols.begin(), cols.end(),
                               [&](const FittedColumn& f) { return f.name == c.name; });
        if (it != cols.end()) {
            if (it->kind != c.kind)
                throw SchemaError("column '" + c.name + "' is " + kind_name(it->kind) +
                                  " in IDS but " + kind_name(c.kind) + " in UEBA");
            it->from_ueba = true;
        } else {
            FittedColumn f;
            f.name = c.name;
            f.kind = c.kind;
            f.from_ueba = true;
            cols.push_back(std::move(f));
        }
    }
    FittedColumn ind;
    ind.name = kIndicatorName;
    ind.kind = ColumnKind::categorical;
    ind.indicator = true;
    cols.push_back(std::move(ind));
    return cols;
}

void check_no_duplicates(const std::vector<ColumnSpec>& cols, const char* which) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i].name == kIndicatorName)
            throw SchemaError(std::string("column name '") + kIndicatorName +
                              "' is reserved for the source indicator");
        for (std::size_t j = i + 1; j < cols.size(); ++j)
            if (cols[i].name == cols[j].name)
                throw SchemaError("duplicate " + std::string(which) + " column name: '" +
                                  cols[i].name + "'");
    }
}

} // namespace

// ---------------------------------------------------------------------------
// FusionSchema
// ---------------------------------------------------------------------------

std::size_t FusionSchema::fused_width() const {
    if (fitted()) return fused_columns.size();
    return union_layout(*this).size();
}

std::vector<std::string> FusionSchema::fused_names() const {
    std::vector<std::string> names;
    if (fitted()) {
        names.reserve(fused_columns.size());
        for (const auto& c : fused_columns) names.push_back(c.name);
    } else {
        for (const auto& c : union_layout(*this)) names.push_back(c.name);
    }
    return names;
}

void FusionSchema::validate() const {
    if (schema_version != 1)
        throw SchemaError("unsupported schema_version " + std::to_string(schema_version));
    if (ids_columns.empty() && ueba_columns.empty())
        throw SchemaError("schema declares no columns");
    check_no_duplicates(ids_columns, "IDS");
    check_no_duplicates(ueba_columns, "UEBA");
    for (const auto& [raw, cls] : label_map_ids)
        if (!class_allowed_for_source(cls, true))
            throw SchemaError("IDS label '" + raw + "' maps to UEBA-only class " +
                              to_string(cls));
    for (const auto& [raw, cls] : label_map_ueba)
        if (!class_allowed_for_source(cls, false))
            throw SchemaError("UEBA label '" + raw + "' maps to IDS-only class " +
                              to_string(cls));
    auto layout = union_layout(*this); // throws on cross-source kind conflicts
    if (fitted()) {
        if (fused_columns.size() != layout.size())
            throw SchemaError("fitted column list does not match declared columns");
        for (std::size_t i = 0; i < layout.size(); ++i) {
            const auto& a = fused_columns[i];
            const auto& b = layout[i];
            if (a.name != b.name || a.kind != b.kind || a.from_ids != b.from_ids ||
                a.from_ueba != b.from_ueba || a.indicator != b.indicator)
                throw SchemaError("fitted column '" + a.name +
                                  "' does not match the declared layout");
            if (a.kind == ColumnKind::continuous && !(a.std_denom > 0.0))
                throw SchemaError("fitted column '" + a.name + "' has non-positive std");
        }
    }
}

std::string FusionSchema::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    auto emit_cols = [](const std::vector<ColumnSpec>& cols) {
        json arr = json::array();
        for (const auto& c : cols) arr.push_back({{"name", c.name}, {"kind", kind_name(c.kind)}});
        return arr;
    };
    j["ids_columns"] = emit_cols(ids_columns);
    j["ueba_columns"] = emit_cols(ueba_columns);
    auto emit_map = [](const std::map<std::string, ThreatClass>& m) {
        json obj = json::object();
        for (const auto& [k, v] : m) obj[k] = to_string(v);
        return obj;
    };
    j["label_map_ids"] = emit_map(label_map_ids);
    j["label_map_ueba"] = emit_map(label_map_ueba);
    if (fitted()) {
        json arr = json::array();
        for (const auto& c : fused_columns) {
            json o;
            o["name"] = c.name;
            o["kind"] = kind_name(c.kind);
            o["from"] = c.indicator ? "indicator"
                        : (c.from_ids && c.from_ueba) ? "both"
                        : c.from_ids                  ? "ids"
                                                      : "ueba";
            if (c.indicator) {
                // layout only
            } else if (c.kind == ColumnKind::continuous) {
                o["mean"] = c.mean;
                o["std"] = c.std_denom;
            } else {
                o["vocab"] = c.vocab;
            }
            arr.push_back(std::move(o));
        }
        j["fitted"] = std::move(arr);
    }
    return j.dump();
}

FusionSchema FusionSchema::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
    }
    FusionSchema s;
    try {
        s.schema_version = j.at("schema_version").get<int>();
        auto read_cols = [](const json& arr) {
            std::vector<ColumnSpec> cols;
            for (const auto& o : arr)
                cols.push_back({o.at("name").get<std::string>(),
                                kind_from_name(o.at("kind").get<std::string>())});
            return cols;
        };
        s.ids_columns = read_cols(j.at("ids_columns"));
        s.ueba_columns = read_cols(j.at("ueba_columns"));
        auto read_map = [](const json& obj) {
            std::map<std::string, ThreatClass> m;
            for (auto it = obj.begin(); it != obj.end(); ++it)
                m[it.key()] = threat_class_from_string(it.value().get<std::string>());
            return m;
        };
        s.label_map_ids = read_map(j.at("label_map_ids"));
        s.label_map_ueba = read_map(j.at("label_map_ueba"));
        if (j.contains("fitted")) {
            for (const auto& o : j.at("fitted")) {
                FittedColumn c;
                c.name = o.at("name").get<std::string>();
                c.kind = kind_from_name(o.at("kind").get<std::string>());
                std::string from = o.at("from").get<std::string>();
                if (from == "indicator") {
                    c.indicator = true;
                } else if (from == "both") {
                    c.from_ids = c.from_ueba = true;
                } else if (from == "ids") {
                    c.from_ids = true;
                } else if (from == "ueba") {
                    c.from_ueba = true;
                } else {
                    throw SchemaError("unknown column source tag: \"" + from + "\"");
                }
                if (c.indicator) {
                    // nothing further
                } else if (c.kind == ColumnKind::continuous) {
                    c.mean = o.at("mean").get<double>();
                    c.std_denom = o.at("std").get<double>();
                } else {
                    c.vocab = o.at("vocab").get<std::vector<std::string>>();
                }
                s.fused_columns.push_back(std::move(c));
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema JSON missing or mistyped field: ") + e.what());
    }
    s.validate();
    return s;
}

FusionSchema FusionSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void FusionSchema::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file: " + path.string());
    out << to_json() << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

std::uint64_t FusionSchema::fingerprint() const { return io::fnv1a(to_json()); }

// ---------------------------------------------------------------------------
// Default schema: KDD/NSL-KDD 41 columns + generic UEBA behavior features
// ---------------------------------------------------------------------------

FusionSchema default_fusion_schema() {
    FusionSchema s;
    auto cont = [](const char* n) { return ColumnSpec{n, ColumnKind::continuous}; };
    auto cat = [](const char* n) { return ColumnSpec{n, ColumnKind::categorical}; };
    s.ids_columns = {
        cont("duration"), cat("protocol_type"), cat("service"), cat("flag"),
        cont("src_bytes"), cont("dst_bytes"), cont("land"), cont("wrong_fragment"),
        cont("urgent"), cont("hot"), cont("num_failed_logins"), cont("logged_in"),
        cont("num_compromised"), cont("root_shell"), cont("su_attempted"), cont("num_root"),
        cont("num_file_creations"), cont("num_shells"), cont("num_access_files"),
        cont("num_outbound_cmds"), cont("is_host_login"), cont("is_guest_login"),
        cont("count"), cont("srv_count"), cont("serror_rate"), cont("srv_serror_rate"),
        cont("rerror_rate"), cont("srv_rerror_rate"), cont("same_srv_rate"),
        cont("diff_srv_rate"), cont("srv_diff_host_rate"), cont("dst_host_count"),
        cont("dst_host_srv_count"), cont("dst_host_same_srv_rate"),
        cont("dst_host_diff_srv_rate"), cont("dst_host_same_src_port_rate"),
        cont("dst_host_srv_diff_host_rate"), cont("dst_host_serror_rate"),
        cont("dst_host_srv_serror_rate"), cont("dst_host_rerror_rate"),
        cont("dst_host_srv_rerror_rate"),
    };
    s.ueba_columns = {
        cont("logon_count"), cont("after_hours_fraction"), cont("distinct_hosts"),
        cont("http_upload_mb"), cont("http_download_mb"), cont("email_sent"),
        cont("email_attach_mb"), cont("usb_events"), cont("file_copies"),
        cont("failed_logons"), cat("role"), cat("device_type"),
    };
    auto add = [&s](std::initializer_list<const char*> labels, ThreatClass cls) {
        for (const char* l : labels) s.label_map_ids[l] = cls;
    };
    s.label_map_ids["normal"] = ThreatClass::Normal;
    add({"back", "land", "neptune", "pod", "smurf", "teardrop", "apache2", "udpstorm",
         "processtable", "mailbomb"},
        ThreatClass::DoS);
    add({"satan", "ipsweep", "nmap", "portsweep", "mscan", "saint"}, ThreatClass::Probe);
    add({"guess_passwd", "ftp_write", "imap", "phf", "multihop", "warezmaster", "warezclient",
         "spy", "xlock", "xsnoop", "snmpguess", "snmpgetattack", "httptunnel", "sendmail",
         "named", "worm"},
        ThreatClass::R2L);
    add({"buffer_overflow", "loadmodule", "rootkit", "perl", "sqlattack", "xterm", "ps"},
        ThreatClass::U2R);
    s.label_map_ueba = {
        {"benign", ThreatClass::Benign},
        {"malicious", ThreatClass::Malicious},
    };
    return s;
}

// ---------------------------------------------------------------------------
// FusedDataset
// ---------------------------------------------------------------------------

std::array<std::size_t, kNumClasses> FusedDataset::class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (int l : labels) {
        if (l < 0 || l >= static_cast<int>(kNumClasses))
            throw DimensionError("label code " + std::to_string(l) + " out of range");
        ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

std::vector<RawRecord> parse_ids_records(std::istream& in, const FusionSchema& schema,
                                         bool require_label) {
    const auto& cols = schema.ids_columns;
    std::vector<RawRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view sv = trim(line);
        if (sv.empty()) continue;
        auto fields = split_csv(sv);
        // 41 features + label, optionally + difficulty score; bare 41 fields
        // are allowed on the prediction path only
        bool bare = fields.size() == cols.size() && !require_label;
        if (!bare && fields.size() != cols.size() + 1 && fields.size() != cols.size() + 2)
            throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(cols.size() + 1) + " or " +
                              std::to_string(cols.size() + 2) + " fields, got " +
                              std::to_string(fields.size()));
        RawRecord rec;
        rec.source = RecordSource::ids;
        rec.values.reserve(cols.size());
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i].kind == ColumnKind::continuous)
                rec.values.emplace_back(parse_double(fields[i], lineno, cols[i].name));
            else
                rec.values.emplace_back(std::string(trim(fields[i])));
        }
        if (!bare) {
            std::string_view label = trim(fields[cols.size()]);
            if (!label.empty() && label.back() == '.') label.remove_suffix(1); // KDDCup99 style
            if (label.empty() && require_label)
                throw ParseError(lineno, "empty label field");
            rec.raw_label = std::string(label);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

std::vector<RawRecord> parse_ueba_csv(const std::vector<std::string>& lines,
                                      const std::vector<std::size_t>& linenos,
                                      const FusionSchema& schema, bool require_label) {
    const auto& cols = schema.ueba_columns;
    auto header = split_csv(trim(lines[0]));
    std::vector<std::string> names;
    names.reserve(header.size());
    for (auto f : header) names.emplace_back(trim(f));
    std::vector<std::size_t> col_index(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        auto it = std::find(names.begin(), names.end(), cols[i].name);
        if (it == names.end())
            throw SchemaError("UEBA header is missing column '" + cols[i].name + "'");
        col_index[i] = static_cast<std::size_t>(it - names.begin());
    }
    auto label_it = std::find(names.begin(), names.end(), "label");
    if (label_it == names.end() && require_label)
        throw SchemaError("UEBA header is missing column 'label'");
    bool has_label = label_it != names.end();
    std::size_t label_index =
        has_label ? static_cast<std::size_t>(label_it - names.begin()) : 0;
    for (const auto& n : names) {
        if (n != "label" &&
            std::none_of(cols.begin(), cols.end(),
                         [&](const ColumnSpec& c) { return c.name == n; }))
            throw SchemaError("UEBA header has undeclared column '" + n + "'");
    }

    std::vector<RawRecord> out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        std::size_t lineno = linenos[li];
        auto fields = split_csv(trim(lines[li]));
        if (fields.size() != names.size())
            throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(names.size()) + " fields, got " +
                              std::to_string(fields.size()));
        RawRecord rec;
        rec.source = RecordSource::ueba;
        rec.values.reserve(cols.size());
        for (std::size_t i = 0; i < cols.size(); ++i) {
            std::string_view f = fields[col_index[i]];
            if (cols[i].kind == ColumnKind::continuous)
                rec.values.emplace_back(parse_double(f, lineno, cols[i].name));
            else
                rec.values.emplace_back(std::string(trim(f)));
        }
        if (has_label) {
            rec.raw_label = std::string(trim(fields[label_index]));
            if (require_label)
                map_label(rec.raw_label, RecordSource::ueba, schema); // reject unknown early
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<RawRecord> parse_ueba_jsonl(const std::vector<std::string>& lines,
                                        const std::vector<std::size_t>& linenos,
                                        const FusionSchema& schema, bool require_label) {
    const auto& cols = schema.ueba_columns;
    std::vector<RawRecord> out;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        std::size_t lineno = linenos[li];
        json o;
        try {
            o = json::parse(lines[li]);
        } catch (const json::exception& e) {
            throw ParseError(lineno, std::string("invalid JSON record: ") + e.what());
        }
        if (!o.is_object()) throw ParseError(lineno, "JSON record is not an object");
        RawRecord rec;
        rec.source = RecordSource::ueba;
        rec.values.reserve(cols.size());
        for (const auto& c : cols) {
            if (!o.contains(c.name))
                throw SchemaError("line " + std::to_string(lineno) + ": record is missing '" +
                                  c.name + "'");
            const json& v = o.at(c.name);
            if (c.kind == ColumnKind::continuous) {
                if (!v.is_number())
                    throw ParseError(lineno, "field '" + c.name + "' is not numeric");
                rec.values.emplace_back(v.get<double>());
            } else {
                if (!v.is_string())
                    throw ParseError(lineno, "field '" + c.name + "' is not a string");
                rec.values.emplace_back(v.get<std::string>());
            }
        }
        if (o.contains("label") && o.at("label").is_string()) {
            rec.raw_label = o.at("label").get<std::string>();
            if (require_label) map_label(rec.raw_label, RecordSource::ueba, schema);
        } else if (require_label) {
            throw ParseError(lineno, "record is missing a string 'label'");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace

std::vector<RawRecord> parse_ueba_records(std::istream& in, const FusionSchema& schema,
                                          bool require_label) {
    std::vector<std::string> lines;
    std::vector<std::size_t> linenos;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        lines.push_back(line);
        linenos.push_back(lineno);
    }
    if (lines.empty()) return {};
    bool jsonl = trim(lines[0]).front() == '{';
    return jsonl ? parse_ueba_jsonl(lines, linenos, schema, require_label)
                 : parse_ueba_csv(lines, linenos, schema, require_label);
}

ThreatClass map_label(const std::string& raw, RecordSource source, const FusionSchema& schema) {
    const auto& m =
        source == RecordSource::ids ? schema.label_map_ids : schema.label_map_ueba;
    auto it = m.find(raw);
    if (it == m.end()) throw UnmappedLabelError(raw);
    return it->second;
}

// ---------------------------------------------------------------------------
// Harmonization
// ---------------------------------------------------------------------------

FusedDataset harmonize(const std::vector<RawRecord>& ids, const std::vector<RawRecord>& ueba,
                       const FusionSchema& schema, const HarmonizeOptions& opts) {
    schema.validate();
    const std::size_t n_ids = ids.size();
    const std::size_t b = n_ids + ueba.size();
    if (b == 0) throw EmptyDatasetError("harmonize: zero input records");
    const bool refit = !schema.fitted();
    std::vector<FittedColumn> cols = refit ? union_layout(schema) : schema.fused_columns;
    const std::size_t d = cols.size();

    if (opts.stats_mask && opts.stats_mask->size() != b)
        throw DimensionError("harmonize: stats mask length " +
                             std::to_string(opts.stats_mask->size()) + " for " +
                             std::to_string(b) + " rows");

    for (const auto& r : ids)
        if (r.values.size() != schema.ids_columns.size())
            throw SchemaError("IDS record has " + std::to_string(r.values.size()) +
                              " values, schema declares " +
                              std::to_string(schema.ids_columns.size()));
    for (const auto& r : ueba)
        if (r.values.size() != schema.ueba_columns.size())
            throw SchemaError("UEBA record has " + std::to_string(r.values.size()) +
                              " values, schema declares " +
                              std::to_string(schema.ueba_columns.size()));

    auto record = [&](std::size_t row) -> const RawRecord& {
        return row < n_ids ? ids[row] : ueba[row - n_ids];
    };
    auto is_stats = [&](std::size_t row) {
        return !opts.stats_mask || (*opts.stats_mask)[row] != 0;
    };

    // Per fused column, its index within each source's declared columns.
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> idx_ids(d, npos), idx_ueba(d, npos);
    for (std::size_t c = 0; c < d; ++c) {
        if (cols[c].indicator) continue;
        if (cols[c].from_ids)
            for (std::size_t i = 0; i < schema.ids_columns.size(); ++i)
                if (schema.ids_columns[i].name == cols[c].name) idx_ids[c] = i;
        if (cols[c].from_ueba)
            for (std::size_t i = 0; i < schema.ueba_columns.size(); ++i)
                if (schema.ueba_columns[i].name == cols[c].name) idx_ueba[c] = i;
    }

    std::vector<int> labels(b);
    for (std::size_t r = 0; r < b; ++r) {
        const RawRecord& rec = record(r);
        if (opts.allow_unlabeled) {
            const auto& m = rec.source == RecordSource::ids ? schema.label_map_ids
                                                            : schema.label_map_ueba;
            auto it = m.find(rec.raw_label);
            labels[r] = it == m.end() ? -1 : static_cast<int>(it->second);
        } else {
            labels[r] = static_cast<int>(map_label(rec.raw_label, rec.source, schema));
        }
    }

    Tensor2 x(b, d);
    for (std::size_t c = 0; c < d; ++c) {
        FittedColumn& col = cols[c];
        if (col.indicator) {
            for (std::size_t r = 0; r < b; ++r) x.at(r, c) = r < n_ids ? 0.0 : 1.0;
            continue;
        }
        auto source_index = [&](std::size_t r) {
            return record(r).source == RecordSource::ids ? idx_ids[c] : idx_ueba[c];
        };
        if (col.kind == ColumnKind::categorical) {
            if (refit) {
                std::vector<std::string> vocab;
                for (std::size_t r = 0; r < b; ++r) {
                    std::size_t si = source_index(r);
                    if (si == npos || !is_stats(r)) continue;
                    const auto* s = std::get_if<std::string>(&record(r).values[si]);
                    if (!s)
                        throw SchemaError("column '" + col.name +
                                          "' is categorical but a record holds a number");
                    vocab.push_back(*s);
                }
                std::sort(vocab.begin(), vocab.end());
                vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
                col.vocab = std::move(vocab);
            }
            for (std::size_t r = 0; r < b; ++r) {
                std::size_t si = source_index(r);
                if (si == npos) {
                    x.at(r, c) = 0.0; // column absent from this record's source
                    continue;
                }
                const auto* s = std::get_if<std::string>(&record(r).values[si]);
                if (!s)
                    throw SchemaError("column '" + col.name +
                                      "' is categorical but a record holds a number");
                auto it = std::lower_bound(col.vocab.begin(), col.vocab.end(), *s);
                std::size_t code = (it != col.vocab.end() && *it == *s)
                                       ? static_cast<std::size_t>(it - col.vocab.begin())
                                       : col.vocab.size(); // unseen value
                x.at(r, c) = static_cast<double>(code);
            }
        } else {
            std::vector<double> raw(b, 0.0);
            for (std::size_t r = 0; r < b; ++r) {
                std::size_t si = source_index(r);
                if (si == npos) continue; // zero-fill
                const auto* v = std::get_if<double>(&record(r).values[si]);
                if (!v)
                    throw SchemaError("column '" + col.name +
                                      "' is continuous but a record holds a string");
                raw[r] = *v;
            }
            if (refit) {
                double mean = 0.0, var = 0.0;
                std::size_t n_stats = 0;
                for (std::size_t r = 0; r < b; ++r)
                    if (is_stats(r)) {
                        mean += raw[r];
                        ++n_stats;
                    }
                if (n_stats > 0) mean /= static_cast<double>(n_stats);
                for (std::size_t r = 0; r < b; ++r)
                    if (is_stats(r)) {
                        double dd = raw[r] - mean;
                        var += dd * dd;
                    }
                if (n_stats > 0) var /= static_cast<double>(n_stats);
                col.mean = n_stats > 0 ? mean : 0.0;
                col.std_denom = var > 0.0 ? std::sqrt(var) : 1.0;
            }
            for (std::size_t r = 0; r < b; ++r)
                x.at(r, c) = (raw[r] - col.mean) / col.std_denom;
        }
    }

    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < b; ++r)
            if (!std::isfinite(x.at(r, c)))
                throw NumericError("harmonize: non-finite value in column '" + cols[c].name +
                                   "', row " + std::to_string(r));

    FusedDataset out;
    out.features = std::move(x);
    out.labels = std::move(labels);
    out.schema = schema;
    out.schema.fused_columns = std::move(cols);
    return out;
}

// ---------------------------------------------------------------------------
// Resampling and splitting
// ---------------------------------------------------------------------------

namespace {

FusedDataset gather_rows(const FusedDataset& data, const std::vector<std::size_t>& rows) {
    FusedDataset out;
    out.features = Tensor2(rows.size(), data.features.cols);
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = data.features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels[i] = data.labels[rows[i]];
    }
    out.schema = data.schema;
    return out;
}

} // namespace

FusedDataset resample(const FusedDataset& data, const ResampleSpec& spec, std::uint64_t seed) {
    if (!(spec.floor_fraction > 0.0 && spec.floor_fraction <= 1.0))
        throw ConfigError("resample: floor_fraction must be in (0, 1], got " +
                          std::to_string(spec.floor_fraction));
    if (data.rows() == 0) throw EmptyDatasetError("resample: empty dataset");
    auto counts = data.class_counts();
    std::size_t majority = *std::max_element(counts.begin(), counts.end());
    auto target = static_cast<std::size_t>(
        std::ceil(spec.floor_fraction * static_cast<double>(majority) - 1e-9));

    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t r = 0; r < data.rows(); ++r)
        by_class[static_cast<std::size_t>(data.labels[r])].push_back(r);

    std::vector<std::size_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), 0);
    for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
        std::size_t n = by_class[cls].size();
        if (n == 0 || n >= target) continue;
        rng::Engine eng(rng::derive_seed(seed, "resample", cls));
        for (std::size_t k = n; k < target; ++k)
            rows.push_back(by_class[cls][eng.below(n)]);
    }
    rng::Engine shuffler(rng::derive_seed(seed, "resample-shuffle"));
    shuffler.shuffle(rows);
    return gather_rows(data, rows);
}

std::vector<char> stratified_test_mask(const std::vector<int>& labels, double fraction,
                                       std::uint64_t seed,
                                       std::vector<std::string>* warnings) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("test fraction must be in (0, 1), got " + std::to_string(fraction));
    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        int l = labels[r];
        if (l < 0 || l >= static_cast<int>(kNumClasses))
            throw DimensionError("label code " + std::to_string(l) + " out of range");
        by_class[static_cast<std::size_t>(l)].push_back(r);
    }
    std::vector<char> mask(labels.size(), 0);
    for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
        auto& members = by_class[cls];
        std::size_t n = members.size();
        if (n == 0) continue;
        if (n == 1) {
            if (warnings)
                warnings->push_back(std::string("class ") +
                                    to_string(static_cast<ThreatClass>(cls)) +
                                    " has a single sample; kept in train");
            continue;
        }
        auto n_test = static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(n) + 0.5));
        n_test = std::min(n_test, n - 1);
        rng::Engine eng(rng::derive_seed(seed, "split", cls));
        eng.shuffle(members);
        for (std::size_t i = 0; i < n_test; ++i) mask[members[i]] = 1;
    }
    return mask;
}

std::pair<FusedDataset, FusedDataset> split(const FusedDataset& data, double test_fraction,
                                            std::uint64_t seed,
                                            std::vector<std::string>* warnings) {
    if (data.rows() == 0) throw EmptyDatasetError("split: empty dataset");
    auto mask = stratified_test_mask(data.labels, test_fraction, seed, warnings);
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < data.rows(); ++r)
        (mask[r] ? test_rows : train_rows).push_back(r);
    return {gather_rows(data, train_rows), gather_rows(data, test_rows)};
}

// ---------------------------------------------------------------------------
// Dataset container
// ---------------------------------------------------------------------------

namespace {
constexpr char kDatasetMagic[4] = {'T', 'I', 'T', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;
} // namespace

void write_dataset(std::ostream& os, const FusedDataset& ds) {
    if (ds.labels.size() != ds.features.rows)
        throw DimensionError("dataset has " + std::to_string(ds.labels.size()) +
                             " labels for " + std::to_string(ds.features.rows) + " rows");
    io::write_magic(os, kDatasetMagic);
    io::write_u32(os, kDatasetVersion);
    io::write_string(os, ds.schema.to_json());
    io::write_tensor(os, ds.features);
    io::write_u64(os, ds.labels.size());
    for (int l : ds.labels) io::write_u8(os, static_cast<std::uint8_t>(l));
}

FusedDataset read_dataset(std::istream& is) {
    io::expect_magic(is, kDatasetMagic, "dataset");
    std::uint32_t version = io::read_u32(is);
    if (version != kDatasetVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    FusedDataset ds;
    ds.schema = FusionSchema::from_json(io::read_string(is));
    ds.features = io::read_tensor(is);
    std::uint64_t n = io::read_u64(is);
    if (n != ds.features.rows)
        throw IoError("dataset label count does not match row count");
    ds.labels.resize(n);
    for (auto& l : ds.labels) {
        std::uint8_t v = io::read_u8(is);
        if (v >= kNumClasses) throw IoError("dataset label code out of range");
        l = static_cast<int>(v);
    }
    return ds;
}

void save_dataset(const FusedDataset& ds, const std::filesystem::path& path) {
    auto os = io::open_out(path);
    write_dataset(os, ds);
}

FusedDataset load_dataset(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    return read_dataset(is);
}

} // namespace tabitd::fusion
