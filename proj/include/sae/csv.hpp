#ifndef SAE_CSV_HPP
#define SAE_CSV_HPP

#include "sae/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sae {

/// Comma-delimited table with a mandatory header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find_column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    }

    std::size_t column(std::string_view name) const {
        if (auto idx = find_column(name)) {
            return *idx;
        }
        throw InputError("missing required column '" + std::string(name) + "'");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(trim(current));
    return fields;
}

} // namespace detail

inline CsvTable parse_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (detail::trim(line).empty()) {
            continue;
        }
        auto fields = detail::split_record(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw InputError("row " + std::to_string(table.rows.size() + 1) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) {
        throw InputError("empty table: header row required");
    }
    return table;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open '" + path + "'");
    }
    try {
        return parse_csv(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline bool is_missing_token(std::string_view s) {
    return s.empty() || s == "NA" || s == "na" || s == "." || s == "NaN";
}

/// Parses a number; returns nullopt for the missing-value tokens.
inline std::optional<double> parse_optional_double(std::string_view s) {
    if (is_missing_token(s)) {
        return std::nullopt;
    }
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (*begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw InputError("not a number: '" + std::string(s) + "'");
    }
    return value;
}

inline double parse_double(std::string_view s) {
    auto v = parse_optional_double(s);
    if (!v) {
        throw InputError("missing numeric value");
    }
    return *v;
}

/// Fixed-point rendering; "-0.00" is normalised to "0.00".
inline std::string format_fixed(double value, int decimals) {
    if (std::isnan(value)) {
        return "NA";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string out(buf);
    if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) {
        out.erase(0, 1);
    }
    return out;
}

/// Round-trip-stable general rendering for machine-readable metrics.
inline std::string format_general(double value, int significant = 10) {
    if (std::isnan(value)) {
        return "NA";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant, value);
    return buf;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out += '"';
    return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out << ',';
        }
        out << csv_escape(fields[i]);
    }
    out << '\n';
}

/// Orders domain ids numerically when both are integers, lexicographically otherwise.
inline bool domain_less(const std::string& a, const std::string& b) {
    long long ia = 0;
    long long ib = 0;
    const auto ra = std::from_chars(a.data(), a.data() + a.size(), ia);
    const auto rb = std::from_chars(b.data(), b.data() + b.size(), ib);
    const bool a_int = ra.ec == std::errc{} && ra.ptr == a.data() + a.size() && !a.empty();
    const bool b_int = rb.ec == std::errc{} && rb.ptr == b.data() + b.size() && !b.empty();
    if (a_int && b_int) {
        return ia < ib;
    }
    if (a_int != b_int) {
        return a_int;
    }
    return a < b;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write '" + path + "'");
    }
    out << content;
    if (!out) {
        throw InputError("write failed for '" + path + "'");
    }
}

} // namespace sae

#endif // SAE_CSV_HPP
