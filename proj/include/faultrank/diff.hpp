#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "faultrank/common.hpp"

namespace faultrank {

// One "@@ -old_start,old_len +new_start,new_len @@" hunk with its body split
// into removed/added/context lines in order.
struct Hunk {
    std::size_t old_start = 0;  // 1-based; 0 when old_len == 0 (pure insertion at top)
    std::size_t old_len = 0;
    std::size_t new_start = 0;
    std::size_t new_len = 0;

    struct BodyLine {
        char tag;  // ' ', '-', '+'
        std::string text;
    };
    std::vector<BodyLine> body;
};

struct FileDiff {
    std::string path;
    std::vector<Hunk> hunks;  // in ascending old_start order
};

namespace detail {

inline bool parse_range(std::string_view s, std::size_t& start, std::size_t& len) {
    // "12,3" or "12" (len defaults to 1)
    std::size_t comma = s.find(',');
    auto to_num = [](std::string_view v, std::size_t& out) {
        if (v.empty()) return false;
        out = 0;
        for (char c : v) {
            if (c < '0' || c > '9') return false;
            out = out * 10 + static_cast<std::size_t>(c - '0');
        }
        return true;
    };
    if (comma == std::string_view::npos) {
        len = 1;
        return to_num(s, start);
    }
    return to_num(s.substr(0, comma), start) && to_num(s.substr(comma + 1), len);
}

}  // namespace detail

// Parses "@@ -a,b +c,d @@" (lengths may be omitted, defaulting to 1).
inline bool parse_hunk_header(std::string_view line, Hunk& out) {
    if (line.substr(0, 4) != "@@ -") return false;
    std::size_t close = line.find(" @@", 4);
    if (close == std::string_view::npos) return false;
    std::string_view middle = line.substr(4, close - 4);
    std::size_t plus = middle.find(" +");
    if (plus == std::string_view::npos) return false;
    return detail::parse_range(middle.substr(0, plus), out.old_start, out.old_len) &&
           detail::parse_range(middle.substr(plus + 2), out.new_start, out.new_len);
}

// Parses the unified-diff text for a single file. git-style preamble lines
// ("diff --git", "index", "---", "+++", mode lines) are skipped; only hunks
// carry information here.
inline std::vector<Hunk> parse_unified_diff(const std::string& text, const std::string& context_label = "") {
    std::vector<Hunk> hunks;
    Hunk* current = nullptr;
    std::size_t pos = 0;
    std::size_t remaining_old = 0, remaining_new = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        std::string_view line = (end == std::string::npos)
                                    ? std::string_view(text).substr(pos)
                                    : std::string_view(text).substr(pos, end - pos);
        pos = (end == std::string::npos) ? text.size() : end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line.rfind("@@", 0) == 0) {
            Hunk h;
            if (!parse_hunk_header(line, h))
                throw ParseError("malformed hunk header" +
                                 (context_label.empty() ? "" : " in " + context_label) + ": '" +
                                 std::string(line) + "'");
            hunks.push_back(std::move(h));
            current = &hunks.back();
            remaining_old = current->old_len;
            remaining_new = current->new_len;
            continue;
        }
        if (line.rfind("diff ", 0) == 0 || line.rfind("index ", 0) == 0 || line.rfind("--- ", 0) == 0 ||
            line.rfind("+++ ", 0) == 0 || line.rfind("old mode", 0) == 0 || line.rfind("new mode", 0) == 0 ||
            line.rfind("new file", 0) == 0 || line.rfind("deleted file", 0) == 0 ||
            line.rfind("\\ No newline", 0) == 0) {
            continue;
        }
        if (!current) {
            if (trim(line).empty()) continue;
            throw ParseError("diff content before any hunk header" +
                             (context_label.empty() ? "" : " in " + context_label) + ": '" +
                             std::string(line) + "'");
        }
        char tag = line.empty() ? ' ' : line[0];
        if (tag != ' ' && tag != '-' && tag != '+')
            throw ParseError("unexpected diff line" + (context_label.empty() ? "" : " in " + context_label) +
                             ": '" + std::string(line) + "'");
        if (tag == ' ' || tag == '-') {
            if (remaining_old == 0)
                throw ParseError("hunk body overruns old range" +
                                 (context_label.empty() ? "" : " in " + context_label));
            --remaining_old;
        }
        if (tag == ' ' || tag == '+') {
            if (remaining_new == 0)
                throw ParseError("hunk body overruns new range" +
                                 (context_label.empty() ? "" : " in " + context_label));
            --remaining_new;
        }
        current->body.push_back({tag, line.empty() ? std::string() : std::string(line.substr(1))});
    }
    for (const auto& h : hunks) {
        std::size_t removed = 0, added = 0;
        for (const auto& bl : h.body) {
            if (bl.tag == ' ') ++removed, ++added;
            else if (bl.tag == '-') ++removed;
            else ++added;
        }
        if (removed != h.old_len || added != h.new_len)
            throw ParseError("hunk body inconsistent with stated ranges" +
                             (context_label.empty() ? "" : " in " + context_label));
    }
    return hunks;
}

// A file's lines plus, per line, the commit that introduced it.
struct AnnotatedFile {
    std::vector<std::string> lines;
    std::vector<std::string> origin;  // same length as lines
};

// Applies one file diff; added lines take `commit` as origin. Context and
// removed lines are checked against the current content; a mismatch means the
// replayed history is corrupt.
inline void apply_diff(AnnotatedFile& file, const std::vector<Hunk>& hunks, const std::string& commit,
                       const std::string& context_label = "") {
    auto corrupt = [&](const std::string& why) {
        throw ValidationError("diff replay inconsistency" +
                              (context_label.empty() ? "" : " at " + context_label) + ": " + why);
    };
    // Apply back-to-front so earlier hunks' stated old positions stay valid.
    for (auto it = hunks.rbegin(); it != hunks.rend(); ++it) {
        const Hunk& h = *it;
        // old_start is 1-based; for a pure insertion old_start is the line after
        // which new lines land (0 = top of file).
        std::size_t at = (h.old_len == 0) ? h.old_start : h.old_start - 1;
        if (at > file.lines.size()) corrupt("hunk start beyond end of file");
        if (h.old_len > file.lines.size() - at) corrupt("hunk old range beyond end of file");

        std::vector<std::string> new_lines, new_origin;
        std::size_t cursor = at;
        for (const auto& bl : h.body) {
            switch (bl.tag) {
                case ' ':
                    if (file.lines[cursor] != bl.text) corrupt("context line mismatch");
                    new_lines.push_back(bl.text);
                    new_origin.push_back(file.origin[cursor]);
                    ++cursor;
                    break;
                case '-':
                    if (file.lines[cursor] != bl.text) corrupt("removed line mismatch");
                    ++cursor;
                    break;
                case '+':
                    new_lines.push_back(bl.text);
                    new_origin.push_back(commit);
                    break;
            }
        }
        file.lines.erase(file.lines.begin() + static_cast<std::ptrdiff_t>(at),
                         file.lines.begin() + static_cast<std::ptrdiff_t>(at + h.old_len));
        file.origin.erase(file.origin.begin() + static_cast<std::ptrdiff_t>(at),
                          file.origin.begin() + static_cast<std::ptrdiff_t>(at + h.old_len));
        file.lines.insert(file.lines.begin() + static_cast<std::ptrdiff_t>(at), new_lines.begin(),
                          new_lines.end());
        file.origin.insert(file.origin.begin() + static_cast<std::ptrdiff_t>(at), new_origin.begin(),
                           new_origin.end());
    }
}

// Old-side line numbers (1-based) of every '-' line in a hunk set.
inline std::vector<std::size_t> removed_line_numbers(const std::vector<Hunk>& hunks) {
    std::vector<std::size_t> out;
    for (const auto& h : hunks) {
        std::size_t cursor = h.old_start;
        for (const auto& bl : h.body) {
            if (bl.tag == ' ') ++cursor;
            else if (bl.tag == '-') out.push_back(cursor++);
        }
    }
    return out;
}

}  // namespace faultrank
