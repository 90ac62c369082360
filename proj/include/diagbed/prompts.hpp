#pragma once

// Renders the four prompt families from a schema's templates. Templates use
// `$identifier` placeholders; unknown placeholders are left untouched.

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "diagbed/surrogate.hpp"

namespace diagbed {

inline std::string substitute(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] != '$') {
            out += tmpl[i++];
            continue;
        }
        std::size_t j = i + 1;
        while (j < tmpl.size() && (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
        const auto it = vars.find(tmpl.substr(i + 1, j - i - 1));
        if (it == vars.end()) {
            out += tmpl.substr(i, j - i);
        } else {
            out += it->second;
        }
        i = j;
    }
    return out;
}

inline std::string python_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += "'" + items[i] + "'";
    }
    return out + "]";
}

namespace detail {

inline std::map<std::string, std::string> base_vars(const SurrogateContext& ctx) {
    return {
        {"known_info", ctx.vignette},
        {"known_data", ctx.vignette},
        {"potential_diagnosis", ctx.disease},
        {"context", ctx.schema->context_preamble},
    };
}

}  // namespace detail

inline std::string risk_prompt(const SurrogateContext& ctx) {
    return substitute(ctx.schema->prompts.risk, detail::base_vars(ctx));
}

/// Sampling prompt. For categorical features the allowed categories are appended
/// so the reply can be matched exactly.
inline std::string sampling_prompt(const SurrogateContext& ctx, const FeatureSpec& feature) {
    auto vars = detail::base_vars(ctx);
    vars["feature_to_sample"] = feature.name;
    vars["ref_info"] = feature.ref_info.empty() ? feature.unit : feature.ref_info;
    auto prompt = substitute(ctx.schema->prompts.sampling, vars);
    if (feature.kind == FeatureKind::Categorical) {
        prompt += "\nReturn exactly one of the following values: " + python_list(feature.categories);
    }
    return prompt;
}

inline std::string implicit_prompt(const SurrogateContext& ctx, const std::vector<std::string>& unknown) {
    auto vars = detail::base_vars(ctx);
    vars["unknown_features"] = python_list(unknown);
    return substitute(ctx.schema->prompts.implicit, vars);
}

inline std::string global_prompt(const DatasetSchema& schema, const std::vector<std::string>& all_features,
                                 std::size_t n) {
    return substitute(schema.prompts.global, {
                                                 {"all_features", python_list(all_features)},
                                                 {"unknown_features", python_list(all_features)},
                                                 {"n", std::to_string(n)},
                                                 {"potential_diagnosis", schema.disease_name},
                                                 {"known_info", ""},
                                                 {"known_data", ""},
                                                 {"context", schema.context_preamble},
                                             });
}

}  // namespace diagbed
