#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// separators and newlines, CRLF or LF line endings.

#include <string>
#include <string_view>
#include <vector>

#include "diagbed/error.hpp"

namespace diagbed::csv {

using Row = std::vector<std::string>;

inline std::vector<Row> parse(std::string_view text, char sep = ',') {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    bool row_has_content = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (row_has_content || row.size() > 1) rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
    };

    // Skip a UTF-8 byte order mark.
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
            row_has_content = true;
        } else if (c == sep) {
            end_field();
            row_has_content = true;
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
        } else if (c == '\n') {
            end_row();
        } else {
            field += c;
            field_started = true;
            row_has_content = true;
        }
    }
    if (in_quotes) throw Error(ErrorKind::Parse, "unterminated quoted CSV field");
    if (field_started || !row.empty() || row_has_content) end_row();
    return rows;
}

inline std::string quote(std::string_view field, char sep = ',') {
    if (field.find_first_of(std::string{sep} + "\"\r\n") == std::string_view::npos &&
        (field.empty() || (field.front() != ' ' && field.back() != ' '))) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_row(const Row& row, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += sep;
        out += quote(row[i], sep);
    }
    out += '\n';
    return out;
}

}  // namespace diagbed::csv
