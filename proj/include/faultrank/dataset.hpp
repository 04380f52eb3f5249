#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"

namespace faultrank {

// ----------------------------------------------------------------------------
// Software-metric canon: 24 metrics in fixed declared order
// (size, complexity, coverage, duplication groups).

inline constexpr std::size_t kMetricCount = 24;

inline const std::array<std::string, kMetricCount>& metric_names() {
    static const std::array<std::string, kMetricCount> names = {
        // size
        "NC", "NF", "LL", "NCLOC", "NCI", "MPI", "P", "STT", "NOF", "NOC", "NOCD",
        // complexity
        "COM", "CCOM", "FC", "COGC", "PDC",
        // test coverage
        "COV", "LTC", "LC", "UL",
        // duplication
        "DL", "DB", "DF", "DLD"};
    return names;
}

// Densities are percentages; everything else is a nonnegative count/average.
inline bool metric_is_density(std::size_t idx) {
    return metric_names()[idx] == "NOCD" || metric_names()[idx] == "DLD";
}

// ----------------------------------------------------------------------------
// Raw per-table record types.

struct IssueEvent {
    std::string commit_hash;
    std::string project;
    std::string rule_id;  // e.g. "squid:S1192"
    std::int64_t count = 0;
};

struct MeasureSnapshot {
    std::string commit_hash;
    std::array<double, kMetricCount> values{};
    // Optional metadata columns; drive project grouping and time ordering when present.
    std::string project;
    std::optional<std::int64_t> commit_time;
    std::size_t source_line = 0;
};

struct FaultLabel {
    std::string commit_hash;
    bool inducing = false;
};

// Optional per-rule metadata (type/severity), e.g. from a rules export.
struct RuleInfo {
    std::string rule_id;
    std::string type;      // Bug | Code Smell | Vulnerability
    std::string severity;  // Blocker..Info
};

// ----------------------------------------------------------------------------
// RuleCatalog: fixed feature-column order for rule counts.

struct RuleCatalog {
    struct Entry {
        std::string rule_id;
        bool categorized = true;
        std::string type;
        std::string severity;
    };
    std::vector<Entry> entries;  // sorted lexicographically by rule_id, unique

    std::size_t size() const { return entries.size(); }

    std::optional<std::size_t> index_of(std::string_view rule_id) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), rule_id,
                                   [](const Entry& e, std::string_view id) { return e.rule_id < id; });
        if (it == entries.end() || it->rule_id != rule_id) return std::nullopt;
        return static_cast<std::size_t>(it - entries.begin());
    }

    std::vector<std::string> rule_ids() const {
        std::vector<std::string> ids;
        ids.reserve(entries.size());
        for (const auto& e : entries) ids.push_back(e.rule_id);
        return ids;
    }

    std::size_t categorized_count() const {
        std::size_t n = 0;
        for (const auto& e : entries)
            if (e.categorized) ++n;
        return n;
    }

    std::string digest() const {
        std::string blob;
        for (const auto& e : entries) {
            blob += e.rule_id;
            blob += e.categorized ? "|1;" : "|0;";
        }
        return digest_hex(blob);
    }
};

// Catalog from observed rules; metadata marks a rule categorized and supplies
// type/severity. Without metadata every observed rule counts as categorized.
inline RuleCatalog build_catalog(const std::vector<IssueEvent>& issues,
                                 const std::vector<RuleInfo>& metadata = {}) {
    std::map<std::string, RuleCatalog::Entry> by_id;
    for (const auto& ev : issues) {
        auto& e = by_id[ev.rule_id];
        e.rule_id = ev.rule_id;
    }
    if (metadata.empty()) {
        for (auto& [id, e] : by_id) e.categorized = true;
    } else {
        std::map<std::string, const RuleInfo*> meta;
        for (const auto& m : metadata) meta[m.rule_id] = &m;
        for (auto& [id, e] : by_id) {
            auto it = meta.find(id);
            if (it == meta.end()) {
                e.categorized = false;
            } else {
                e.categorized = true;
                e.type = it->second->type;
                e.severity = it->second->severity;
            }
        }
    }
    RuleCatalog catalog;
    for (auto& [id, e] : by_id) catalog.entries.push_back(std::move(e));  // map iteration is sorted
    return catalog;
}

// ----------------------------------------------------------------------------
// JointDataset: one labeled row per analyzed commit.

struct JointDataset {
    struct Row {
        std::string commit_hash;
        std::string project;
        std::size_t ordinal = 0;  // position within project history after sorting
        std::int64_t commit_time = 0;
        std::vector<float> rule_counts;  // aligned to catalog (full catalog width)
        std::array<double, kMetricCount> metrics{};
        bool inducing = false;
    };

    RuleCatalog catalog;
    std::vector<Row> rows;

    // Load/join bookkeeping, surfaced rather than hidden.
    std::size_t issues_dropped_unknown_commit = 0;
    std::size_t labels_dropped_unknown_commit = 0;
    std::size_t metric_cells_filled = 0;

    std::size_t size() const { return rows.size(); }

    std::size_t inducing_count() const {
        std::size_t n = 0;
        for (const auto& r : rows)
            if (r.inducing) ++n;
        return n;
    }
};

// ----------------------------------------------------------------------------
// JSON serialization. nlohmann::json sorts object keys, so identical inputs
// serialize byte-identically.

inline nlohmann::json to_json(const RuleCatalog& c) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& e : c.entries) {
        nlohmann::json j{{"rule_id", e.rule_id}, {"categorized", e.categorized}};
        if (!e.type.empty()) j["type"] = e.type;
        if (!e.severity.empty()) j["severity"] = e.severity;
        rules.push_back(std::move(j));
    }
    return nlohmann::json{{"rules", std::move(rules)}, {"digest", c.digest()}};
}

inline RuleCatalog catalog_from_json(const nlohmann::json& j) {
    RuleCatalog c;
    for (const auto& r : j.at("rules")) {
        RuleCatalog::Entry e;
        e.rule_id = r.at("rule_id").get<std::string>();
        e.categorized = r.at("categorized").get<bool>();
        if (r.contains("type")) e.type = r["type"].get<std::string>();
        if (r.contains("severity")) e.severity = r["severity"].get<std::string>();
        c.entries.push_back(std::move(e));
    }
    return c;
}

inline std::string serialize_dataset(const JointDataset& ds) {
    nlohmann::json j;
    j["format"] = "faultrank.dataset.v1";
    j["catalog"] = to_json(ds.catalog);
    j["metric_names"] = metric_names();
    j["stats"] = {{"issues_dropped_unknown_commit", ds.issues_dropped_unknown_commit},
                  {"labels_dropped_unknown_commit", ds.labels_dropped_unknown_commit},
                  {"metric_cells_filled", ds.metric_cells_filled}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : ds.rows) {
        rows.push_back(nlohmann::json{{"hash", r.commit_hash},
                                      {"project", r.project},
                                      {"ordinal", r.ordinal},
                                      {"time", r.commit_time},
                                      {"counts", r.rule_counts},
                                      {"metrics", r.metrics},
                                      {"inducing", r.inducing}});
    }
    j["rows"] = std::move(rows);
    return j.dump(1, '\t') + "\n";
}

inline JointDataset deserialize_dataset(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "faultrank.dataset.v1")
        throw SchemaError("not a faultrank dataset file (format tag mismatch)");
    JointDataset ds;
    ds.catalog = catalog_from_json(j.at("catalog"));
    const auto& stats = j.at("stats");
    ds.issues_dropped_unknown_commit = stats.at("issues_dropped_unknown_commit").get<std::size_t>();
    ds.labels_dropped_unknown_commit = stats.at("labels_dropped_unknown_commit").get<std::size_t>();
    ds.metric_cells_filled = stats.at("metric_cells_filled").get<std::size_t>();
    for (const auto& r : j.at("rows")) {
        JointDataset::Row row;
        row.commit_hash = r.at("hash").get<std::string>();
        row.project = r.at("project").get<std::string>();
        row.ordinal = r.at("ordinal").get<std::size_t>();
        row.commit_time = r.at("time").get<std::int64_t>();
        row.rule_counts = r.at("counts").get<std::vector<float>>();
        auto m = r.at("metrics").get<std::vector<double>>();
        if (m.size() != kMetricCount) throw SchemaError("dataset row with wrong metric arity");
        std::copy(m.begin(), m.end(), row.metrics.begin());
        row.inducing = r.at("inducing").get<bool>();
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

}  // namespace faultrank
