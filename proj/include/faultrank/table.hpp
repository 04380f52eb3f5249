#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faultrank/common.hpp"

namespace faultrank {

// Delimiter-separated text table with a header row. Minimal CSV dialect:
// double-quote quoting with "" escapes, no embedded newlines.
struct Table {
    std::string path;
    char delimiter = ',';
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // each row padded/validated to header size
    std::vector<std::size_t> line_numbers;       // 1-based source line of each row

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }

    std::size_t require_column(std::string_view name) const {
        auto idx = column(name);
        if (!idx) throw SchemaError(path + ": missing required column '" + std::string(name) + "'");
        return *idx;
    }
};

namespace detail {

inline std::vector<std::string> split_record(std::string_view line, char delim, const std::string& path,
                                             std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\r') {
            // ignore
        } else {
            cur += c;
        }
    }
    if (quoted) throw ParseError(path + ":" + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

}  // namespace detail

inline char sniff_delimiter(std::string_view header_line) {
    std::size_t commas = 0, tabs = 0, semis = 0;
    for (char c : header_line) {
        if (c == ',') ++commas;
        if (c == '\t') ++tabs;
        if (c == ';') ++semis;
    }
    if (tabs > commas && tabs > semis) return '\t';
    if (semis > commas && semis > tabs) return ';';
    return ',';
}

inline Table read_table(const std::string& path, char delimiter = '\0') {
    if (!file_exists(path)) throw Error("file not found: " + path);
    std::string text = read_file(path);
    Table t;
    t.path = path;

    std::size_t pos = 0, line_no = 0;
    bool have_header = false;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        std::string_view line;
        if (end == std::string::npos) {
            line = std::string_view(text).substr(pos);
            pos = text.size() + 1;
        } else {
            line = std::string_view(text).substr(pos, end - pos);
            pos = end + 1;
        }
        ++line_no;
        if (line.empty() || line == "\r") {
            if (pos > text.size()) break;
            continue;
        }
        if (!have_header) {
            t.delimiter = delimiter ? delimiter : sniff_delimiter(line);
            t.header = detail::split_record(line, t.delimiter, path, line_no);
            for (auto& h : t.header) h = trim(h);
            have_header = true;
            continue;
        }
        auto fields = detail::split_record(line, t.delimiter, path, line_no);
        if (fields.size() != t.header.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) throw SchemaError(path + ": empty file, header row required");
    return t;
}

inline double parse_number(const std::string& field, const std::string& path, std::size_t line_no,
                           const std::string& column) {
    std::string v = trim(field);
    if (v.empty()) throw ValidationError(path + ":" + std::to_string(line_no) + ": empty cell in column '" + column + "'");
    std::size_t consumed = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &consumed);
    } catch (const std::exception&) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + v +
                              "' in column '" + column + "'");
    }
    if (consumed != v.size())
        throw ValidationError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + v +
                              "' in column '" + column + "'");
    return out;
}

inline std::string csv_escape(std::string_view field, char delim = ',') {
    bool needs = false;
    for (char c : field)
        if (c == delim || c == '"' || c == '\n') needs = true;
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace faultrank
