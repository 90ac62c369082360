#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace diagbed {

enum class ErrorKind {
    InvalidArgument,
    Schema,
    Parse,
    NotFound,
    Conflict,
    Validation,
    Upstream,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Upstream: return "upstream";
    }
    return "unknown";
}

// Every failure the library reports carries a kind, so callers (the service in
// particular) can map it without string matching. `field` names the offending
// input where there is one; `raw` keeps an unparseable surrogate reply.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string field = {}, std::string raw = {})
        : std::runtime_error(message), kind_(kind), field_(std::move(field)), raw_(std::move(raw)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& raw() const noexcept { return raw_; }

private:
    ErrorKind kind_;
    std::string field_;
    std::string raw_;
};

}  // namespace diagbed
