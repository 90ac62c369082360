#pragma once

// Dataset schemas are data: a JSON manifest declares the disease, the
// features with their vignette phrasing, the label column and the prompt
// templates. New datasets need no recompilation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diagbed/belief.hpp"
#include "diagbed/error.hpp"
#include "diagbed/value.hpp"

namespace diagbed {

enum class FeatureKind { Numeric, Categorical };
enum class NumberFormat { Real, Integer };

inline constexpr std::string_view kValuePlaceholder = "{value}";

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    std::string unit;
    std::vector<std::string> categories;
    // Optional wording substituted for a category inside the vignette
    // ("poor" -> "a poor"); categories without an entry render verbatim.
    std::map<std::string, std::string> phrases;
    std::string vignette_template;
    std::string ref_info;
    bool known_at_start = false;
    double raw_cost = 1.0;
    NumberFormat number_format = NumberFormat::Real;

    bool has_category(const std::string& value) const {
        return std::find(categories.begin(), categories.end(), value) != categories.end();
    }

    void validate() const {
        if (name.empty()) throw Error(ErrorKind::Schema, "feature without a name");
        std::size_t count = 0;
        for (auto pos = vignette_template.find(kValuePlaceholder); pos != std::string::npos;
             pos = vignette_template.find(kValuePlaceholder, pos + 1)) {
            ++count;
        }
        if (count != 1) {
            throw Error(ErrorKind::Schema, "template for " + name + " must contain exactly one {value}", name);
        }
        if (kind == FeatureKind::Categorical && categories.empty()) {
            throw Error(ErrorKind::Schema, "categorical feature " + name + " declares no categories", name);
        }
        if (kind == FeatureKind::Numeric && !categories.empty()) {
            throw Error(ErrorKind::Schema, "numeric feature " + name + " declares categories", name);
        }
        if (!(raw_cost > 0.0)) throw Error(ErrorKind::Schema, "cost of " + name + " must be positive", name);
    }
};

/// The four prompt families. Placeholders use `$name` syntax.
struct PromptSet {
    std::string system;
    std::string risk;
    std::string global;
    std::string implicit;
    std::string sampling;
};

struct DatasetSchema {
    std::string name;
    std::string disease_name;
    std::string context_preamble;
    std::vector<FeatureSpec> features;
    std::string label_column;
    std::vector<std::string> positive_labels;
    std::vector<std::string> negative_labels;
    std::string id_column;
    // When set, each record names its own candidate diagnosis (case-based data).
    std::string disease_column;
    std::vector<std::string> missing_tokens{"", "?", "NA", "NaN", "nan"};
    CostMode cost_mode = CostMode::Uniform;
    std::filesystem::path csv_path;
    PromptSet prompts;

    const FeatureSpec* find(const std::string& feature) const {
        for (const auto& f : features) {
            if (f.name == feature) return &f;
        }
        return nullptr;
    }

    const FeatureSpec& at(const std::string& feature) const {
        if (const auto* f = find(feature)) return *f;
        throw Error(ErrorKind::NotFound, "unknown feature " + feature, feature);
    }

    std::size_t index_of(const std::string& feature) const {
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (features[i].name == feature) return i;
        }
        throw Error(ErrorKind::NotFound, "unknown feature " + feature, feature);
    }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> names;
        for (const auto& f : features) names.push_back(f.name);
        return names;
    }

    CostModel cost_model(double lambda = 0.0) const {
        if (cost_mode == CostMode::Uniform) return CostModel::uniform();
        std::map<std::string, double> costs;
        for (const auto& f : features) costs[f.name] = f.raw_cost;
        return CostModel::per_feature(std::move(costs), lambda);
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& f : features) {
            f.validate();
            if (!seen.insert(f.name).second) throw Error(ErrorKind::Schema, "duplicate feature " + f.name, f.name);
        }
        if (label_column.empty()) throw Error(ErrorKind::Schema, "label column not declared", "label_column");
        if (seen.count(label_column)) {
            throw Error(ErrorKind::Schema, "label column collides with a feature", label_column);
        }
        bool selectable = false;
        for (const auto& f : features) selectable = selectable || !f.known_at_start;
        if (!selectable) throw Error(ErrorKind::Schema, "every feature is known at start; nothing to select");
        if (cost_mode == CostMode::PerFeature) cost_model().validate();
    }
};

/// One patient with a complete set of feature values.
struct PatientRecord {
    std::string id;
    Evidence values;
    int label = 0;
    std::string disease;  // empty unless the schema has a disease column

    const FeatureValue& value(const std::string& feature) const {
        const auto it = values.find(feature);
        if (it == values.end()) throw Error(ErrorKind::NotFound, "record " + id + " lacks " + feature, feature);
        return it->second;
    }

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

inline PromptSet default_prompts() {
    PromptSet p;
    p.system = "You assist with clinical diagnostic reasoning and follow output formats exactly.";
    p.risk =
        "Act as a specialist physician. $context Read the patient summary below and estimate how likely it is "
        "that this patient has $potential_diagnosis. Weigh abnormal findings towards 1 and reassuring findings "
        "towards 0. Reply with one decimal number between 0 and 1 and nothing else.\n$known_info";
    p.global =
        "Act as a specialist physician. The available measurements are $all_features. Before seeing any "
        "patient, choose the $n measurements that carry the most diagnostic value for $potential_diagnosis. "
        "Reply with a Python list of exactly $n names copied from the list above and nothing else.";
    p.implicit =
        "Act as a specialist physician. What is known about the patient so far: $known_data\n"
        "Measurements not yet taken: $unknown_features\n"
        "Name the single measurement you would order next to diagnose $potential_diagnosis. Reply with the "
        "name exactly as written in the list and nothing else.";
    p.sampling =
        "Act as a specialist physician. $context Given the patient summary below, generate one random, "
        "clinically realistic value for $feature_to_sample ($ref_info). Treat this as a draw from the spread of "
        "values seen in practice, including uncommon ones, rather than a typical value. The patient may or may "
        "not have $potential_diagnosis; let the draw reflect that.\n$known_info\n"
        "Reply with the value only: a plain number for measurements, or the category text for categorical "
        "items. No units, words or explanation.";
    return p;
}

namespace detail {

inline std::string join_lines(const nlohmann::json& j) {
    if (j.is_string()) return j.get<std::string>();
    std::string out;
    for (const auto& line : j) {
        if (!out.empty()) out += '\n';
        out += line.get<std::string>();
    }
    return out;
}

inline FeatureSpec parse_feature(const nlohmann::json& j) {
    FeatureSpec f;
    f.name = j.at("name").get<std::string>();
    const auto kind = j.value("kind", std::string{"numeric"});
    if (kind == "numeric") {
        f.kind = FeatureKind::Numeric;
    } else if (kind == "categorical") {
        f.kind = FeatureKind::Categorical;
    } else {
        throw Error(ErrorKind::Schema, "feature " + f.name + " has unknown kind " + kind, f.name);
    }
    f.unit = j.value("unit", std::string{});
    f.vignette_template = j.at("template").get<std::string>();
    f.ref_info = j.value("ref_info", std::string{});
    f.known_at_start = j.value("known_at_start", false);
    f.raw_cost = j.value("cost", 1.0);
    const auto format = j.value("format", std::string{"real"});
    if (format == "integer") {
        f.number_format = NumberFormat::Integer;
    } else if (format != "real") {
        throw Error(ErrorKind::Schema, "feature " + f.name + " has unknown format " + format, f.name);
    }
    if (j.contains("categories")) {
        for (const auto& c : j.at("categories")) {
            if (c.is_string()) {
                f.categories.push_back(c.get<std::string>());
            } else {
                const auto value = c.at("value").get<std::string>();
                f.categories.push_back(value);
                if (c.contains("phrase")) f.phrases[value] = c.at("phrase").get<std::string>();
            }
        }
    }
    return f;
}

}  // namespace detail

/// Parses a manifest document. Relative CSV paths resolve against `base_dir`.
inline DatasetSchema parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    DatasetSchema s;
    try {
        s.name = j.value("name", std::string{});
        s.disease_name = j.at("disease_name").get<std::string>();
        s.context_preamble = j.value("context_preamble", std::string{});
        s.label_column = j.at("label_column").get<std::string>();
        s.positive_labels = j.value("positive_labels", std::vector<std::string>{});
        s.negative_labels = j.value("negative_labels", std::vector<std::string>{});
        s.id_column = j.value("id_column", std::string{});
        s.disease_column = j.value("disease_column", std::string{});
        if (j.contains("missing_tokens")) s.missing_tokens = j.at("missing_tokens").get<std::vector<std::string>>();
        const auto mode = j.value("cost_mode", std::string{"uniform"});
        if (mode == "per-feature") {
            s.cost_mode = CostMode::PerFeature;
        } else if (mode != "uniform") {
            throw Error(ErrorKind::Schema, "unknown cost_mode " + mode, "cost_mode");
        }
        if (j.contains("csv")) {
            std::filesystem::path csv = j.at("csv").get<std::string>();
            s.csv_path = csv.is_relative() && !base_dir.empty() ? base_dir / csv : csv;
        }
        for (const auto& f : j.at("features")) s.features.push_back(detail::parse_feature(f));
        s.prompts = default_prompts();
        if (j.contains("prompts")) {
            const auto& p = j.at("prompts");
            if (p.contains("system")) s.prompts.system = detail::join_lines(p.at("system"));
            if (p.contains("risk")) s.prompts.risk = detail::join_lines(p.at("risk"));
            if (p.contains("global")) s.prompts.global = detail::join_lines(p.at("global"));
            if (p.contains("implicit")) s.prompts.implicit = detail::join_lines(p.at("implicit"));
            if (p.contains("sampling")) s.prompts.sampling = detail::join_lines(p.at("sampling"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("malformed manifest: ") + e.what());
    }
    s.validate();
    return s;
}

inline DatasetSchema load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, "manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    auto schema = parse_manifest(j, path.parent_path());
    if (schema.name.empty()) schema.name = path.stem().string();
    return schema;
}

}  // namespace diagbed
