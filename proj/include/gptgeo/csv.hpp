#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gptgeo/error.hpp"

namespace gptgeo::csv {

/// Shortest representation that round-trips to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (v == 0.0) return "0"; // folds -0
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Accumulates rows into an in-memory CSV document ("\n" line endings).
class Writer {
public:
    explicit Writer(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) doc_.push_back(',');
            doc_ += quote(fields[i]);
        }
        doc_.push_back('\n');
    }

    const std::string& str() const noexcept { return doc_; }

private:
    std::string doc_;
};

using Row = std::vector<std::string>;

/// Parses an RFC-4180 style document. Blank lines are skipped.
inline std::vector<Row> parse(std::string_view doc) {
    std::vector<Row> rows;
    Row current;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    auto end_field = [&] {
        current.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        if (!current.empty() || field_started || !field.empty()) {
            end_field();
            rows.push_back(std::move(current));
        }
        current.clear();
    };
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const char c = doc[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < doc.size() && doc[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            field_started = true;
            end_field();
            field_started = true;
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw Error("schema_mismatch", "unterminated quoted CSV field");
    end_row();
    return rows;
}

inline double parse_number(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error("schema_mismatch", "not a number: '" + std::string(s) + "'");
    }
    return v;
}

} // namespace gptgeo::csv
