#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pricer {

/// Shortest representation that round-trips the double exactly.
inline std::string format_double(double x) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, p);
}

inline double parse_double(std::string_view s) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::runtime_error("parse_double: bad number '" + std::string(s) + "'");
    return x;
}

inline long parse_long(std::string_view s) {
    long x = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::runtime_error("parse_long: bad integer '" + std::string(s) + "'");
    return x;
}

namespace csv {

inline bool needs_quoting(std::string_view field) {
    return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

inline void write_field(std::ostream& os, std::string_view field) {
    if (!needs_quoting(field)) {
        os << field;
        return;
    }
    os << '"';
    for (char c : field) {
        if (c == '"') os << '"';
        os << c;
    }
    os << '"';
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        write_field(os, fields[i]);
    }
    os << '\n';
}

/// RFC 4180 reader: handles quoted fields, embedded quotes, and embedded
/// newlines. Returns false at end of input.
inline bool read_row(std::istream& is, std::vector<std::string>& out) {
    out.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = is.get()) != EOF) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (is.peek() == '"') {
                    field.push_back('"');
                    is.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(static_cast<char>(c));
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            // swallow; \n terminates
        } else if (c == '\n') {
            out.push_back(std::move(field));
            return true;
        } else {
            field.push_back(static_cast<char>(c));
        }
    }
    if (!any) return false;
    out.push_back(std::move(field));
    return true;
}

}  // namespace csv
}  // namespace pricer
