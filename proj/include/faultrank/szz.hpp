#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/dataset.hpp"
#include "faultrank/diff.hpp"

namespace faultrank {

struct HistoryCommit {
    std::string hash;
    std::vector<std::string> parents;
    std::int64_t author_time = 0;
    std::string message;
    std::vector<FileDiff> file_diffs;  // diffs against the first parent
};

struct History {
    std::vector<HistoryCommit> commits;  // topological order, parents first
    std::unordered_map<std::string, std::size_t> index;

    const HistoryCommit* find(const std::string& hash) const {
        auto it = index.find(hash);
        return it == index.end() ? nullptr : &commits[it->second];
    }
};

// Per-line introducing commit for one (file, commit) pair.
struct LineProvenance {
    std::string path;
    std::string at_commit;
    std::vector<std::string> line_commit;  // index i -> commit that introduced line i+1
};

struct FixCommit {
    std::string hash;
    std::optional<std::int64_t> report_time;  // bug-report time; filters late candidates
};

struct FixSet {
    std::vector<FixCommit> fixes;  // sorted by hash, unique
    bool empty() const { return fixes.empty(); }
};

// ----------------------------------------------------------------------------
// parse_history: line-delimited JSON records
//   {"hash", "parents": [...], "author_time", "message", "diffs": [{"path","diff"}]}
// Records must arrive parents-first; an unknown parent is a graph error.

inline History parse_history(const std::string& path) {
    if (!file_exists(path)) throw Error("file not found: " + path);
    std::string text = read_file(path);
    History h;
    std::size_t pos = 0, record = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        std::string_view line = (end == std::string::npos)
                                    ? std::string_view(text).substr(pos)
                                    : std::string_view(text).substr(pos, end - pos);
        pos = (end == std::string::npos) ? text.size() : end + 1;
        if (trim(line).empty()) continue;
        ++record;
        std::string label = path + " record " + std::to_string(record);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(label + ": invalid JSON: " + e.what());
        }
        HistoryCommit c;
        try {
            c.hash = j.at("hash").get<std::string>();
            c.parents = j.value("parents", std::vector<std::string>{});
            c.author_time = j.value("author_time", std::int64_t{0});
            c.message = j.value("message", std::string{});
            for (const auto& d : j.value("diffs", nlohmann::json::array())) {
                FileDiff fd;
                fd.path = d.at("path").get<std::string>();
                fd.hunks = parse_unified_diff(d.at("diff").get<std::string>(),
                                              label + " (" + fd.path + ")");
                c.file_diffs.push_back(std::move(fd));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(label + ": " + e.what());
        }
        for (const auto& p : c.parents)
            if (!h.index.count(p))
                throw ValidationError(label + ": parent " + p + " unknown (history must be parents-first)");
        if (h.index.count(c.hash)) throw ValidationError(label + ": duplicate commit " + c.hash);
        h.index[c.hash] = h.commits.size();
        h.commits.push_back(std::move(c));
    }
    return h;
}

namespace detail {

// First-parent chain from root to `hash`, inclusive.
inline std::vector<std::size_t> first_parent_chain(const History& h, const std::string& hash) {
    std::vector<std::size_t> chain;
    auto it = h.index.find(hash);
    if (it == h.index.end()) throw ValidationError("commit not in history: " + hash);
    std::size_t cur = it->second;
    while (true) {
        chain.push_back(cur);
        const auto& c = h.commits[cur];
        if (c.parents.empty()) break;
        cur = h.index.at(c.parents.front());
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

}  // namespace detail

// Reconstructs `file` at `at` by replaying first-parent diffs from the root,
// tracking which commit introduced each surviving line.
inline LineProvenance annotate(const History& h, const std::string& file, const std::string& at) {
    auto chain = detail::first_parent_chain(h, at);
    AnnotatedFile state;
    bool exists = false;
    for (std::size_t idx : chain) {
        const auto& commit = h.commits[idx];
        for (const auto& fd : commit.file_diffs) {
            if (fd.path != file) continue;
            apply_diff(state, fd.hunks, commit.hash, commit.hash + ":" + file);
            exists = true;
        }
    }
    if (!exists) throw Error("file not found in history at " + at + ": " + file);
    LineProvenance prov;
    prov.path = file;
    prov.at_commit = at;
    prov.line_commit = std::move(state.origin);
    return prov;
}

// Reconstructed content, for replay checks and tooling.
inline std::vector<std::string> file_at(const History& h, const std::string& file, const std::string& at) {
    auto chain = detail::first_parent_chain(h, at);
    AnnotatedFile state;
    bool exists = false;
    for (std::size_t idx : chain) {
        const auto& commit = h.commits[idx];
        for (const auto& fd : commit.file_diffs) {
            if (fd.path != file) continue;
            apply_diff(state, fd.hunks, commit.hash, commit.hash + ":" + file);
            exists = true;
        }
    }
    if (!exists) throw Error("file not found in history at " + at + ": " + file);
    return state.lines;
}

// ----------------------------------------------------------------------------
// identify_fix_commits: commits whose message matches `issue_pattern` plus an
// explicit list. Each fix defaults its report time to its own commit time.

inline FixSet identify_fix_commits(const History& h, const std::string& issue_pattern,
                                   const std::vector<std::string>& explicit_hashes = {}) {
    std::optional<std::regex> re;
    if (!issue_pattern.empty()) {
        // std::regex has no inline-flag syntax; honor a leading "(?i)" by
        // stripping it and enabling icase.
        std::string body = issue_pattern;
        auto flags = std::regex::ECMAScript;
        if (body.rfind("(?i)", 0) == 0) {
            body = body.substr(4);
            flags |= std::regex::icase;
        }
        try {
            re.emplace(body, flags);
        } catch (const std::regex_error& e) {
            throw ValidationError("invalid fix pattern '" + issue_pattern + "': " + e.what());
        }
    }
    std::map<std::string, FixCommit> found;
    if (re) {
        for (const auto& c : h.commits)
            if (std::regex_search(c.message, *re)) found[c.hash] = {c.hash, c.author_time};
    }
    for (const auto& hash : explicit_hashes) {
        const auto* c = h.find(hash);
        if (!c) throw ValidationError("explicit fix commit not in history: " + hash);
        found[hash] = {hash, c->author_time};
    }
    FixSet fs;
    for (auto& [hash, fix] : found) fs.fixes.push_back(std::move(fix));
    if (fs.fixes.empty()) log_warn("no fix commits identified (pattern matched nothing, no explicit list)");
    return fs;
}

// ----------------------------------------------------------------------------
// locate_inducing: for every line a fix deletes or modifies, blame the
// introducing commit in the fix's first parent. Candidates authored after the
// fix's report time are discarded. Pure additions blame nothing.

inline std::vector<FaultLabel> locate_inducing(const History& h, const FixSet& fixes) {
    std::set<std::string> inducing;
    for (const auto& fix : fixes.fixes) {
        const auto* commit = h.find(fix.hash);
        if (!commit) throw ValidationError("fix commit not in history: " + fix.hash);
        if (commit->parents.empty()) {
            log_warn("fix commit " + fix.hash + " has no parent, nothing to blame");
            continue;
        }
        const std::string& parent = commit->parents.front();
        for (const auto& fd : commit->file_diffs) {
            auto removed = removed_line_numbers(fd.hunks);
            if (removed.empty()) continue;
            LineProvenance prov = annotate(h, fd.path, parent);
            for (std::size_t line : removed) {
                if (line == 0 || line > prov.line_commit.size())
                    throw ValidationError("fix " + fix.hash + " removes line " + std::to_string(line) +
                                          " beyond " + fd.path + " at parent " + parent);
                const std::string& candidate = prov.line_commit[line - 1];
                if (fix.report_time) {
                    const auto* cand = h.find(candidate);
                    if (cand && cand->author_time > *fix.report_time) continue;
                }
                inducing.insert(candidate);
            }
        }
    }
    std::vector<FaultLabel> labels;
    labels.reserve(inducing.size());
    for (const auto& hash : inducing) labels.push_back({hash, true});
    return labels;
}

// Labels table as consumed by the ingest loaders.
inline std::string serialize_labels(const std::vector<FaultLabel>& labels) {
    std::string out = "commit_hash,inducing\n";
    for (const auto& l : labels) out += l.commit_hash + (l.inducing ? ",true\n" : ",false\n");
    return out;
}

}  // namespace faultrank
