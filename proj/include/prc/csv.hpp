#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "prc/errors.hpp"

namespace prc::csv {

// In-memory CSV table. Cells are stored as strings; numeric access parses on
// demand. Missing cells are "" or "NA" and map to NaN for numeric columns.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] == name) return j;
        }
        throw SchemaError("missing required column: " + name);
    }

    bool has_column(const std::string& name) const {
        for (const auto& h : header) {
            if (h == name) return true;
        }
        return false;
    }
};

inline bool is_missing_cell(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN";
}

inline double parse_double(const std::string& cell, const std::string& context) {
    if (is_missing_cell(cell)) return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError("cannot parse numeric value '" + cell + "' in " + context);
    }
    return value;
}

// Splits one CSV record. Handles double-quoted fields with "" escapes; no
// embedded newlines (records are physical lines).
inline std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) {
        throw ParseError("unterminated quote on line " + std::to_string(line_no));
    }
    fields.push_back(field);
    return fields;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    Table table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            table.header = split_record(line, line_no);
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_record(line, line_no);
        if (fields.size() != table.header.size()) {
            throw ParseError("line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) throw ParseError("empty file: " + path);
    return table;
}

// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw Error("number formatting failed");
    return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void write_file(const std::string& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j) out << ',';
        out << quote_if_needed(table.header[j]);
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << quote_if_needed(row[j]);
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

} // namespace prc::csv
