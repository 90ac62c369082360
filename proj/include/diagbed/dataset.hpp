#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diagbed/csv.hpp"
#include "diagbed/schema.hpp"

namespace diagbed {

/// A row that was skipped during ingestion. `row` is the 1-based data row.
struct RowIssue {
    std::size_t row = 0;
    std::string column;
    std::string reason;
};

struct LoadResult {
    std::vector<PatientRecord> records;
    std::vector<RowIssue> dropped;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

inline bool contains(const std::vector<std::string>& list, const std::string& value) {
    return std::find(list.begin(), list.end(), value) != list.end();
}

inline std::optional<int> coerce_label(const std::string& raw, const DatasetSchema& schema) {
    const std::string text(trim(raw));
    if (contains(schema.positive_labels, text)) return 1;
    if (contains(schema.negative_labels, text)) return 0;
    if (!schema.positive_labels.empty() && !schema.negative_labels.empty()) return std::nullopt;
    double value = 0.0;
    if (parse_real(text, value) && (value == 0.0 || value == 1.0)) return static_cast<int>(value);
    if (!schema.positive_labels.empty()) return 0;
    return std::nullopt;
}

}  // namespace detail

/// Parses CSV text against a schema. Rows with a missing or invalid cell are
/// dropped and reported; a missing column or an empty result is fatal.
inline LoadResult load_dataset(std::string_view csv_text, const DatasetSchema& schema) {
    const auto rows = csv::parse(csv_text);
    if (rows.empty()) throw Error(ErrorKind::Schema, "CSV has no header row");
    const auto& header = rows.front();

    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) return i;
        }
        throw Error(ErrorKind::Schema, "CSV lacks column " + name, name);
    };

    std::vector<std::size_t> feature_cols;
    for (const auto& f : schema.features) feature_cols.push_back(column_of(f.name));
    const std::size_t label_col = column_of(schema.label_column);
    const std::optional<std::size_t> id_col =
        schema.id_column.empty() ? std::nullopt : std::optional{column_of(schema.id_column)};
    const std::optional<std::size_t> disease_col =
        schema.disease_column.empty() ? std::nullopt : std::optional{column_of(schema.disease_column)};

    LoadResult result;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto cell = [&](std::size_t col) -> std::string {
            return col < row.size() ? std::string(trim(row[col])) : std::string{};
        };
        PatientRecord record;
        record.id = id_col ? cell(*id_col) : std::to_string(r);
        std::optional<RowIssue> issue;

        for (std::size_t i = 0; i < schema.features.size() && !issue; ++i) {
            const auto& f = schema.features[i];
            const auto text = cell(feature_cols[i]);
            if (detail::contains(schema.missing_tokens, text)) {
                issue = RowIssue{r, f.name, "missing value"};
            } else if (f.kind == FeatureKind::Numeric) {
                double value = 0.0;
                if (parse_real(text, value)) {
                    record.values.emplace(f.name, value);
                } else {
                    issue = RowIssue{r, f.name, "unparseable numeric value '" + text + "'"};
                }
            } else if (f.has_category(text)) {
                record.values.emplace(f.name, text);
            } else {
                issue = RowIssue{r, f.name, "value '" + text + "' not among declared categories"};
            }
        }
        if (!issue) {
            const auto label = detail::coerce_label(cell(label_col), schema);
            if (label) {
                record.label = *label;
            } else {
                issue = RowIssue{r, schema.label_column, "unrecognised label '" + cell(label_col) + "'"};
            }
        }
        if (!issue && disease_col) {
            record.disease = cell(*disease_col);
            if (record.disease.empty()) issue = RowIssue{r, schema.disease_column, "missing diagnosis"};
        }
        if (issue) {
            result.dropped.push_back(std::move(*issue));
        } else {
            result.records.push_back(std::move(record));
        }
    }
    if (result.records.empty()) throw Error(ErrorKind::Schema, "dataset has no complete records");
    return result;
}

inline LoadResult load_dataset(const DatasetSchema& schema) {
    if (schema.csv_path.empty()) throw Error(ErrorKind::Schema, "manifest names no CSV file", "csv");
    return load_dataset(read_file(schema.csv_path), schema);
}

/// Writes records back in the schema's column layout. Labels are written as
/// 0/1 and values in canonical text, so reloading yields equal records.
inline std::string serialize_dataset(const std::vector<PatientRecord>& records, const DatasetSchema& schema) {
    csv::Row header;
    if (!schema.id_column.empty()) header.push_back(schema.id_column);
    for (const auto& f : schema.features) header.push_back(f.name);
    header.push_back(schema.label_column);
    if (!schema.disease_column.empty()) header.push_back(schema.disease_column);
    std::string out = csv::format_row(header);
    for (const auto& rec : records) {
        csv::Row row;
        if (!schema.id_column.empty()) row.push_back(rec.id);
        for (const auto& f : schema.features) row.push_back(to_text(rec.value(f.name)));
        const bool named_labels = !schema.positive_labels.empty() && !schema.negative_labels.empty();
        row.push_back(named_labels ? (rec.label ? schema.positive_labels.front() : schema.negative_labels.front())
                                   : std::to_string(rec.label));
        if (!schema.disease_column.empty()) row.push_back(rec.disease);
        out += csv::format_row(row);
    }
    return out;
}

/// Text substituted into a feature's template for one value.
inline std::string render_value(const FeatureSpec& f, const FeatureValue& value) {
    if (const auto* d = std::get_if<double>(&value)) {
        std::string text = f.number_format == NumberFormat::Integer ? format_integer(*d) : format_real(*d);
        if (!f.unit.empty()) text += " " + f.unit;
        return text;
    }
    const auto& category = std::get<std::string>(value);
    const auto it = f.phrases.find(category);
    return it != f.phrases.end() ? it->second : category;
}

inline std::string render_sentence(const FeatureSpec& f, const FeatureValue& value) {
    std::string sentence = f.vignette_template;
    const auto pos = sentence.find(kValuePlaceholder);
    sentence.replace(pos, kValuePlaceholder.size(), render_value(f, value));
    return sentence;
}

/// Renders the known evidence as one sentence per feature, in schema order.
inline std::string render_vignette(const Evidence& known, const DatasetSchema& schema) {
    for (const auto& [name, value] : known) {
        if (!schema.find(name)) throw Error(ErrorKind::NotFound, "unknown feature " + name, name);
    }
    std::string out;
    for (const auto& f : schema.features) {
        const auto it = known.find(f.name);
        if (it == known.end()) continue;
        if (!out.empty()) out += ' ';
        out += render_sentence(f, it->second);
    }
    return out;
}

inline Evidence select_evidence(const PatientRecord& record, const std::set<std::string>& known) {
    Evidence ev;
    for (const auto& name : known) ev.emplace(name, record.value(name));
    return ev;
}

inline std::string render_vignette(const PatientRecord& record, const std::set<std::string>& known,
                                   const DatasetSchema& schema) {
    return render_vignette(select_evidence(record, known), schema);
}

struct Partition {
    std::vector<std::string> known;
    std::vector<std::string> unknown;
};

/// Splits the schema's features by known_at_start, each side in schema order.
inline Partition partition(const DatasetSchema& schema) {
    Partition p;
    for (const auto& f : schema.features) (f.known_at_start ? p.known : p.unknown).push_back(f.name);
    return p;
}

/// Checks that a value fits a feature's kind. Numbers given as text are converted.
inline FeatureValue validate_value(const FeatureSpec& f, const FeatureValue& value) {
    if (f.kind == FeatureKind::Numeric) {
        if (const auto* d = std::get_if<double>(&value)) {
            if (!std::isfinite(*d)) throw Error(ErrorKind::Validation, "non-finite value for " + f.name, f.name);
            return value;
        }
        double parsed = 0.0;
        if (parse_real(std::get<std::string>(value), parsed)) return parsed;
        throw Error(ErrorKind::Validation, "feature " + f.name + " expects a number", f.name);
    }
    const std::string text = is_numeric(value) ? format_integer(std::get<double>(value)) : std::get<std::string>(value);
    if (!f.has_category(text)) {
        throw Error(ErrorKind::Validation, "'" + text + "' is not a category of " + f.name, f.name);
    }
    return text;
}

}  // namespace diagbed
