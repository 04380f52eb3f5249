#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "faultrank/common.hpp"
#include "faultrank/dataset.hpp"
#include "faultrank/table.hpp"

namespace faultrank {

namespace detail {

// Accepts epoch seconds or "YYYY-MM-DD[ HH:MM:SS]" (UTC).
inline std::optional<std::int64_t> parse_time(const std::string& raw) {
    std::string v = trim(raw);
    if (v.empty()) return std::nullopt;
    bool integral = true;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(std::isdigit(static_cast<unsigned char>(v[i])) || (i == 0 && v[i] == '-'))) integral = false;
    if (integral) {
        try {
            return std::stoll(v);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    int year, month, day, hh = 0, mm = 0, ss = 0;
    char sep = ' ';
    int n = std::sscanf(v.c_str(), "%d-%d-%d%c%d:%d:%d", &year, &month, &day, &sep, &hh, &mm, &ss);
    if (n < 3) return std::nullopt;
    // days since epoch (civil date arithmetic)
    std::int64_t y = year - (month <= 2 ? 1 : 0);
    std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    std::int64_t yoe = y - era * 400;
    std::int64_t doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    std::int64_t days = era * 146097 + doe - 719468;
    return days * 86400 + hh * 3600 + mm * 60 + ss;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// load_issues: the source table holds one row per (commit, rule, file); rows
// are summed into one IssueEvent per (commit, rule). Total occurrences are
// preserved.

inline std::vector<IssueEvent> load_issues(const std::string& path) {
    Table t = read_table(path);
    std::size_t c_hash = t.require_column("commit_hash");
    std::size_t c_proj = t.require_column("project");
    std::size_t c_rule = t.require_column("rule_id");
    std::size_t c_count = t.require_column("count");

    std::map<std::pair<std::string, std::string>, IssueEvent> agg;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        double raw = parse_number(row[c_count], path, t.line_numbers[i], "count");
        if (raw < 0 || raw != std::floor(raw))
            throw ValidationError(path + ":" + std::to_string(t.line_numbers[i]) +
                                  ": count must be a nonnegative integer, got '" + row[c_count] + "'");
        auto count = static_cast<std::int64_t>(raw);
        if (count == 0) continue;  // contributes nothing
        auto key = std::make_pair(row[c_hash], row[c_rule]);
        auto& ev = agg[key];
        if (ev.commit_hash.empty()) {
            ev.commit_hash = row[c_hash];
            ev.project = row[c_proj];
            ev.rule_id = row[c_rule];
        }
        ev.count += count;
    }
    std::vector<IssueEvent> events;
    events.reserve(agg.size());
    for (auto& [key, ev] : agg) events.push_back(std::move(ev));  // sorted by (commit, rule)
    return events;
}

// ----------------------------------------------------------------------------
// load_measures: one snapshot per row, columns normalized to the canonical
// metric order. Recognizes optional "project" and "commit_time" columns.
// Empty metric cells fill with 0 (counted); densities must stay in [0,100].

inline std::vector<MeasureSnapshot> load_measures(const std::string& path, std::size_t* cells_filled = nullptr) {
    Table t = read_table(path);
    std::size_t c_hash = t.require_column("commit_hash");

    std::vector<std::size_t> metric_cols(kMetricCount);
    std::vector<std::string> missing;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        auto idx = t.column(metric_names()[m]);
        if (!idx) missing.push_back(metric_names()[m]);
        else metric_cols[m] = *idx;
    }
    if (!missing.empty())
        throw SchemaError(path + ": expected " + std::to_string(kMetricCount) +
                          " metric columns, missing: " + join(missing, ", "));

    auto c_proj = t.column("project");
    auto c_time = t.column("commit_time");

    std::size_t filled = 0;
    std::vector<MeasureSnapshot> snapshots;
    snapshots.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        MeasureSnapshot s;
        s.commit_hash = row[c_hash];
        s.source_line = t.line_numbers[i];
        if (c_proj) s.project = row[*c_proj];
        if (c_time) s.commit_time = detail::parse_time(row[*c_time]);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const std::string& cell = row[metric_cols[m]];
            double v;
            if (trim(cell).empty()) {
                v = 0.0;
                ++filled;
            } else {
                v = parse_number(cell, path, t.line_numbers[i], metric_names()[m]);
            }
            if (metric_is_density(m)) {
                if (v < 0.0 || v > 100.0)
                    throw ValidationError(path + ":" + std::to_string(t.line_numbers[i]) + ": density metric " +
                                          metric_names()[m] + " out of [0,100]: " + cell);
            } else if (v < 0.0) {
                throw ValidationError(path + ":" + std::to_string(t.line_numbers[i]) + ": metric " +
                                      metric_names()[m] + " must be nonnegative: " + cell);
            }
            s.values[m] = v;
        }
        snapshots.push_back(std::move(s));
    }
    if (filled > 0) log_info(path + ": filled " + std::to_string(filled) + " empty metric cells with 0");
    if (cells_filled) *cells_filled = filled;
    return snapshots;
}

// ----------------------------------------------------------------------------
// load_labels: commit_hash + boolean inducing column.

inline std::vector<FaultLabel> load_labels(const std::string& path) {
    Table t = read_table(path);
    std::size_t c_hash = t.require_column("commit_hash");
    std::size_t c_ind = t.require_column("inducing");
    std::vector<FaultLabel> labels;
    labels.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        std::string v = trim(t.rows[i][c_ind]);
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        bool inducing;
        if (v == "true" || v == "1" || v == "yes") inducing = true;
        else if (v == "false" || v == "0" || v == "no") inducing = false;
        else
            throw ValidationError(path + ":" + std::to_string(t.line_numbers[i]) +
                                  ": inducing must be boolean, got '" + t.rows[i][c_ind] + "'");
        labels.push_back({t.rows[i][c_hash], inducing});
    }
    return labels;
}

inline std::vector<RuleInfo> load_rule_metadata(const std::string& path) {
    Table t = read_table(path);
    std::size_t c_rule = t.require_column("rule_id");
    auto c_type = t.column("type");
    auto c_sev = t.column("severity");
    std::vector<RuleInfo> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        RuleInfo info;
        info.rule_id = row[c_rule];
        if (c_type) info.type = row[*c_type];
        if (c_sev) info.severity = row[*c_sev];
        out.push_back(std::move(info));
    }
    return out;
}

// ----------------------------------------------------------------------------
// join_dataset: one row per measure snapshot, keyed by commit hash. Commits
// with no issues keep all-zero rule vectors; labels default to not inducing.
// Rows sort by (project, commit time); ties keep input order.

inline JointDataset join_dataset(const std::vector<IssueEvent>& issues,
                                 const std::vector<MeasureSnapshot>& measures,
                                 const std::vector<FaultLabel>& labels, const RuleCatalog& catalog) {
    JointDataset ds;
    ds.catalog = catalog;

    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(measures.size());
    ds.rows.reserve(measures.size());
    for (std::size_t i = 0; i < measures.size(); ++i) {
        const auto& m = measures[i];
        if (row_of.count(m.commit_hash))
            throw ValidationError("duplicate commit hash in measures: " + m.commit_hash);
        JointDataset::Row row;
        row.commit_hash = m.commit_hash;
        row.project = m.project;
        // No time column: input order stands in as the per-project ordering.
        row.commit_time = m.commit_time ? *m.commit_time : static_cast<std::int64_t>(i);
        row.metrics = m.values;
        row.rule_counts.assign(catalog.size(), 0.0f);
        row_of[m.commit_hash] = ds.rows.size();
        ds.rows.push_back(std::move(row));
    }

    for (const auto& ev : issues) {
        auto it = row_of.find(ev.commit_hash);
        if (it == row_of.end()) {
            ++ds.issues_dropped_unknown_commit;
            continue;
        }
        auto idx = catalog.index_of(ev.rule_id);
        if (!idx)
            throw ValidationError("issue references rule absent from catalog: " + ev.rule_id);
        auto& row = ds.rows[it->second];
        row.rule_counts[*idx] = static_cast<float>(ev.count);
        if (row.project.empty()) row.project = ev.project;
    }
    if (ds.issues_dropped_unknown_commit > 0)
        log_warn("dropped " + std::to_string(ds.issues_dropped_unknown_commit) +
                 " issue events referencing commits absent from measures");

    std::unordered_map<std::string, bool> seen_label;
    for (const auto& lab : labels) {
        if (seen_label.count(lab.commit_hash))
            throw ValidationError("duplicate commit hash in labels: " + lab.commit_hash);
        seen_label[lab.commit_hash] = true;
        auto it = row_of.find(lab.commit_hash);
        if (it == row_of.end()) {
            ++ds.labels_dropped_unknown_commit;
            continue;
        }
        ds.rows[it->second].inducing = lab.inducing;
    }
    if (ds.labels_dropped_unknown_commit > 0)
        log_warn("dropped " + std::to_string(ds.labels_dropped_unknown_commit) +
                 " labels referencing commits absent from measures");

    std::stable_sort(ds.rows.begin(), ds.rows.end(), [](const auto& a, const auto& b) {
        if (a.project != b.project) return a.project < b.project;
        return a.commit_time < b.commit_time;
    });
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        if (i > 0 && ds.rows[i].project != ds.rows[i - 1].project) ordinal = 0;
        ds.rows[i].ordinal = ordinal++;
    }
    return ds;
}

}  // namespace faultrank
