#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>

#include "diagbed/error.hpp"

namespace diagbed {

/// A feature observation: a real number or a category label.
using FeatureValue = std::variant<double, std::string>;

/// Observed feature values keyed by feature name.
using Evidence = std::map<std::string, FeatureValue>;

inline bool is_numeric(const FeatureValue& v) { return std::holds_alternative<double>(v); }

/// Shortest round-trip decimal, always carrying a fractional part for
/// integral values ("380.0", "1.01", "2.7"). This is the form clinical
/// vignettes use for laboratory values.
inline std::string format_real(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    std::string out(buf, end);
    if (out.find_first_of(".e") == std::string::npos) out += ".0";
    return out;
}

/// Integral rendering ("63"); falls back to format_real for non-integral values.
inline std::string format_integer(double value) {
    if (std::isfinite(value) && std::floor(value) == value && std::abs(value) < 1e15) {
        return std::to_string(static_cast<long long>(value));
    }
    return format_real(value);
}

inline std::string to_text(const FeatureValue& v) {
    if (const auto* d = std::get_if<double>(&v)) return format_real(*d);
    return std::get<std::string>(v);
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
}

/// Parses a complete token as a finite real; nullopt-style failure via bool.
inline bool parse_real(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') {
        text.remove_prefix(1);
        if (text.empty() || text.front() == '-' || text.front() == '+') return false;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return false;
    out = value;
    return true;
}

/// Canonical "name=value;name=value" text of an evidence set (names sorted).
inline std::string canonical_evidence(const Evidence& evidence) {
    std::string out;
    for (const auto& [name, value] : evidence) {
        if (!out.empty()) out += ';';
        out += name;
        out += '=';
        out += to_text(value);
    }
    return out;
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// 16-hex-digit key identifying an evidence set, used by scripted risk tables.
inline std::string evidence_hash(const Evidence& evidence) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_evidence(evidence))));
    return buf;
}

/// splitmix64 step; used to derive independent per-query seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::string_view text) { return mix_seed(a, fnv1a64(text)); }

}  // namespace diagbed
