#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "evcast/errors.hpp"

namespace evcast::csv {

/// One delimited row. Quoted fields may contain the delimiter and doubled quotes.
inline std::vector<std::string> split_row(const std::string& line, char delim = ',') {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline Table read_table(std::istream& in, char delim = ',') {
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty input, expected a header row");
    // Strip a UTF-8 BOM if present.
    if (line.size() >= 3 && line[0] == '\xef' && line[1] == '\xbb' && line[2] == '\xbf') line.erase(0, 3);
    t.header = split_row(line, delim);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        t.rows.push_back(split_row(line, delim));
    }
    return t;
}

inline std::string quote_if_needed(const std::string& s, char delim = ',') {
    if (s.find_first_of(std::string{delim} + "\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields, char delim = ',') {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << delim;
        out << quote_if_needed(fields[i], delim);
    }
    out << '\n';
}

/// Shortest decimal that round-trips the double exactly.
inline std::string fmt_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Fixed-precision rendering for report tables.
inline std::string fmt_fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return std::string(buf);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e) throw DataError("csv: not a number: '" + s + "'");
    return v;
}

}  // namespace evcast::csv
