#pragma once

// Strict readers for surrogate replies. Prompts demand a bare number, a bare
// feature name or a Python-style list; anything else is a parse failure that
// the caller answers with a retry.

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diagbed/error.hpp"
#include "diagbed/value.hpp"

namespace diagbed {

/// One optionally signed real token, surrounding whitespace allowed, nothing else.
inline double parse_strict_float(std::string_view raw) {
    double value = 0.0;
    const auto text = trim(raw);
    if (text.empty()) throw Error(ErrorKind::Parse, "empty reply", {}, std::string(raw));
    if (!parse_real(text, value)) throw Error(ErrorKind::Parse, "reply is not a single float", {}, std::string(raw));
    return value;
}

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

/// Strips whitespace, quotes, backticks and a trailing full stop.
inline std::string_view strip_decoration(std::string_view s) {
    s = trim(s);
    while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
    while (s.size() >= 1 && (s.front() == '\'' || s.front() == '"' || s.front() == '`')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '\'' || s.back() == '"' || s.back() == '`')) s.remove_suffix(1);
    return trim(s);
}

}  // namespace detail

/// Case-insensitive match of a reply against a candidate list; returns the
/// candidate's canonical spelling.
inline std::string match_feature(std::string_view raw, const std::vector<std::string>& candidates) {
    const auto wanted = detail::lower(detail::strip_decoration(raw));
    for (const auto& c : candidates) {
        if (detail::lower(c) == wanted) return c;
    }
    throw Error(ErrorKind::Parse, "invalid selection", {}, std::string(raw));
}

/// Reads "['A', 'B']" (or without brackets) into exactly n distinct candidates.
inline std::vector<std::string> parse_feature_list(std::string_view raw, const std::vector<std::string>& candidates,
                                                   std::size_t n) {
    auto text = trim(raw);
    if (!text.empty() && text.front() == '[') {
        if (text.back() != ']') throw Error(ErrorKind::Parse, "unterminated list", {}, std::string(raw));
        text = text.substr(1, text.size() - 2);
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (!detail::strip_decoration(item).empty()) {
            auto name = match_feature(item, candidates);
            if (!seen.insert(name).second) throw Error(ErrorKind::Parse, "duplicate feature in list", {}, std::string(raw));
            out.push_back(std::move(name));
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (out.size() != n) {
        throw Error(ErrorKind::Parse, "expected " + std::to_string(n) + " features, got " + std::to_string(out.size()),
                    {}, std::string(raw));
    }
    return out;
}

}  // namespace diagbed
