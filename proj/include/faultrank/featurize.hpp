#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/dataset.hpp"
#include "faultrank/rng.hpp"

namespace faultrank {

enum class FeatureSet { Rules, Metrics };

inline std::string to_string(FeatureSet fs) { return fs == FeatureSet::Rules ? "rules" : "metrics"; }

inline FeatureSet feature_set_from_string(const std::string& s) {
    if (s == "rules") return FeatureSet::Rules;
    if (s == "metrics") return FeatureSet::Metrics;
    throw ValidationError("unknown feature set '" + s + "' (expected rules|metrics)");
}

// ----------------------------------------------------------------------------
// Model-ready containers. Values are dense row-major float.

struct FeatureMatrix {
    std::size_t n = 0, m = 0;
    std::vector<float> values;  // n*m
    std::vector<std::uint8_t> labels;
    std::vector<std::string> feature_names;
    std::vector<std::string> sample_ids;
    std::string feature_set;
    std::string catalog_digest;

    float at(std::size_t i, std::size_t j) const { return values[i * m + j]; }
    float& at(std::size_t i, std::size_t j) { return values[i * m + j]; }
    const float* row(std::size_t i) const { return values.data() + i * m; }

    std::size_t size() const { return n; }

    FeatureMatrix subset(const std::vector<std::size_t>& indices) const {
        FeatureMatrix out;
        out.m = m;
        out.n = indices.size();
        out.feature_names = feature_names;
        out.feature_set = feature_set;
        out.catalog_digest = catalog_digest;
        out.values.reserve(out.n * m);
        out.labels.reserve(out.n);
        for (std::size_t i : indices) {
            out.values.insert(out.values.end(), values.begin() + static_cast<std::ptrdiff_t>(i * m),
                              values.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
            out.labels.push_back(labels[i]);
            if (!sample_ids.empty()) out.sample_ids.push_back(sample_ids[i]);
        }
        return out;
    }
};

struct WindowProvenance {
    std::string project;
    std::size_t end_pos = 0;  // ordinal of the window's last commit; label comes from end_pos + 1
};

struct WindowedTensor {
    std::size_t n = 0, h = 0, m = 0;
    std::vector<float> values;  // n*h*m
    std::vector<std::uint8_t> labels;
    std::vector<std::string> feature_names;
    std::vector<WindowProvenance> provenance;
    std::string feature_set;
    std::string catalog_digest;

    float at(std::size_t i, std::size_t t, std::size_t j) const { return values[(i * h + t) * m + j]; }
    float& at(std::size_t i, std::size_t t, std::size_t j) { return values[(i * h + t) * m + j]; }
    const float* sample(std::size_t i) const { return values.data() + i * h * m; }

    std::size_t size() const { return n; }

    WindowedTensor subset(const std::vector<std::size_t>& indices) const {
        WindowedTensor out;
        out.h = h;
        out.m = m;
        out.n = indices.size();
        out.feature_names = feature_names;
        out.feature_set = feature_set;
        out.catalog_digest = catalog_digest;
        std::size_t stride = h * m;
        out.values.reserve(out.n * stride);
        for (std::size_t i : indices) {
            out.values.insert(out.values.end(), values.begin() + static_cast<std::ptrdiff_t>(i * stride),
                              values.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
            out.labels.push_back(labels[i]);
            if (!provenance.empty()) out.provenance.push_back(provenance[i]);
        }
        return out;
    }
};

// ----------------------------------------------------------------------------
// Feature-column selection.

inline std::vector<std::size_t> rule_feature_columns(const RuleCatalog& catalog, bool include_uncategorized) {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < catalog.entries.size(); ++i)
        if (include_uncategorized || catalog.entries[i].categorized) cols.push_back(i);
    return cols;
}

// snapshot_matrix: one row per commit, no temporal information.
inline FeatureMatrix snapshot_matrix(const JointDataset& ds, FeatureSet feature_set,
                                     bool include_uncategorized = false) {
    if (ds.rows.empty()) throw ValidationError("snapshot_matrix: empty dataset");
    FeatureMatrix fm;
    fm.feature_set = to_string(feature_set);
    fm.catalog_digest = ds.catalog.digest();
    std::vector<std::size_t> cols;
    if (feature_set == FeatureSet::Rules) {
        cols = rule_feature_columns(ds.catalog, include_uncategorized);
        for (std::size_t c : cols) fm.feature_names.push_back(ds.catalog.entries[c].rule_id);
    } else {
        for (const auto& name : metric_names()) fm.feature_names.push_back(name);
    }
    fm.m = fm.feature_names.size();
    fm.n = ds.rows.size();
    fm.values.reserve(fm.n * fm.m);
    for (const auto& row : ds.rows) {
        if (feature_set == FeatureSet::Rules) {
            for (std::size_t c : cols) fm.values.push_back(row.rule_counts[c]);
        } else {
            for (double v : row.metrics) fm.values.push_back(static_cast<float>(v));
        }
        fm.labels.push_back(row.inducing ? 1 : 0);
        fm.sample_ids.push_back(row.commit_hash);
    }
    return fm;
}

// windowed_tensor: rolling windows of h consecutive commits per project; the
// label is the commit immediately after the window. A project with n commits
// contributes max(n - h, 0) samples at step 1.
inline WindowedTensor windowed_tensor(const JointDataset& ds, std::size_t h = 10, std::size_t step = 1,
                                      FeatureSet feature_set = FeatureSet::Rules,
                                      bool include_uncategorized = false) {
    if (h < 1) throw ValidationError("windowed_tensor: window length must be >= 1");
    if (step < 1) throw ValidationError("windowed_tensor: step must be >= 1");
    WindowedTensor wt;
    wt.h = h;
    wt.feature_set = to_string(feature_set);
    wt.catalog_digest = ds.catalog.digest();
    std::vector<std::size_t> cols;
    if (feature_set == FeatureSet::Rules) {
        cols = rule_feature_columns(ds.catalog, include_uncategorized);
        for (std::size_t c : cols) wt.feature_names.push_back(ds.catalog.entries[c].rule_id);
    } else {
        for (const auto& name : metric_names()) wt.feature_names.push_back(name);
    }
    wt.m = wt.feature_names.size();

    auto push_row = [&](const JointDataset::Row& row) {
        if (feature_set == FeatureSet::Rules) {
            for (std::size_t c : cols) wt.values.push_back(row.rule_counts[c]);
        } else {
            for (double v : row.metrics) wt.values.push_back(static_cast<float>(v));
        }
    };

    std::size_t begin = 0;
    while (begin < ds.rows.size()) {
        std::size_t end = begin;
        while (end < ds.rows.size() && ds.rows[end].project == ds.rows[begin].project) ++end;
        std::size_t n_p = end - begin;
        if (n_p <= h) {
            log_info("project '" + ds.rows[begin].project + "' has " + std::to_string(n_p) +
                     " commits, shorter than window+1, contributes no samples");
        } else {
            for (std::size_t i = 0; i + h < n_p; i += step) {
                for (std::size_t t = 0; t < h; ++t) push_row(ds.rows[begin + i + t]);
                wt.labels.push_back(ds.rows[begin + i + h].inducing ? 1 : 0);
                wt.provenance.push_back({ds.rows[begin].project, ds.rows[begin + i + h - 1].ordinal});
                ++wt.n;
            }
        }
        begin = end;
    }
    return wt;
}

// ----------------------------------------------------------------------------
// Stratified folds and train/test split.

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold_of;  // per-sample fold index
    std::uint64_t seed = 0;

    std::vector<std::size_t> test_indices(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] == fold) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> train_indices(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] != fold) out.push_back(i);
        return out;
    }
};

inline FoldAssignment stratified_folds(const std::vector<std::uint8_t>& labels, std::size_t k,
                                       std::uint64_t seed) {
    if (k < 2) throw ValidationError("stratified_folds: k must be >= 2");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty())
        throw ValidationError("stratified_folds: both classes must be present");
    FoldAssignment fa;
    fa.k = k;
    fa.seed = seed;
    fa.fold_of.assign(labels.size(), 0);
    int class_id = 0;
    for (auto* cls : {&neg, &pos}) {
        if (cls->size() < k)
            throw ValidationError("stratified_folds: class " + std::to_string(class_id) + " has " +
                                  std::to_string(cls->size()) + " samples, fewer than k=" +
                                  std::to_string(k) + "; use a smaller k");
        Rng rng = make_rng(seed, "stratified_folds", static_cast<std::uint64_t>(class_id));
        auto perm = random_permutation(cls->size(), rng);
        // Rotate the dealing start so the two classes' remainders land on
        // different folds.
        std::size_t start = static_cast<std::size_t>(rng() % k);
        for (std::size_t j = 0; j < perm.size(); ++j)
            fa.fold_of[(*cls)[perm[j]]] = (start + j) % k;
        ++class_id;
    }
    return fa;
}

// Stratified shuffled split. The train side gets floor(N * fraction) samples,
// apportioned per class by largest remainder.
template <typename Data>
std::pair<Data, Data> train_test_split(const Data& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_test_split: fraction must be in (0,1)");
    const auto& labels = data.labels;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    std::size_t total = labels.size();
    std::size_t target = static_cast<std::size_t>(std::floor(static_cast<double>(total) * train_fraction));

    std::size_t base_neg = static_cast<std::size_t>(std::floor(static_cast<double>(neg.size()) * train_fraction));
    std::size_t base_pos = static_cast<std::size_t>(std::floor(static_cast<double>(pos.size()) * train_fraction));
    double rem_neg = static_cast<double>(neg.size()) * train_fraction - static_cast<double>(base_neg);
    double rem_pos = static_cast<double>(pos.size()) * train_fraction - static_cast<double>(base_pos);
    std::size_t leftover = target - std::min(target, base_neg + base_pos);
    while (leftover > 0) {
        if (rem_pos > rem_neg) {
            if (base_pos < pos.size()) ++base_pos;
            rem_pos = -1.0;
        } else {
            if (base_neg < neg.size()) ++base_neg;
            rem_neg = -1.0;
        }
        --leftover;
        if (rem_pos < 0 && rem_neg < 0) break;
    }
    if ((base_pos == 0 && !pos.empty()) || (base_neg == 0 && !neg.empty()))
        throw ValidationError("train_test_split: split would leave a class absent from the train set");

    std::vector<std::size_t> train_idx, test_idx;
    int class_id = 0;
    for (auto [cls, take] : {std::make_pair(&neg, base_neg), std::make_pair(&pos, base_pos)}) {
        Rng rng = make_rng(seed, "train_test_split", static_cast<std::uint64_t>(class_id++));
        auto perm = random_permutation(cls->size(), rng);
        for (std::size_t j = 0; j < perm.size(); ++j)
            (j < take ? train_idx : test_idx).push_back((*cls)[perm[j]]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

// ----------------------------------------------------------------------------
// Per-feature standardization with train-set statistics.

struct Standardizer {
    std::vector<double> mean, stdev;

    static Standardizer fit(const WindowedTensor& data) {
        Standardizer s;
        s.mean.assign(data.m, 0.0);
        s.stdev.assign(data.m, 1.0);
        std::size_t count = data.n * data.h;
        if (count == 0) return s;
        std::vector<double> sum(data.m, 0.0), sumsq(data.m, 0.0);
        for (std::size_t i = 0; i < data.n; ++i)
            for (std::size_t t = 0; t < data.h; ++t)
                for (std::size_t j = 0; j < data.m; ++j) {
                    double v = data.at(i, t, j);
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
        for (std::size_t j = 0; j < data.m; ++j) {
            s.mean[j] = sum[j] / static_cast<double>(count);
            double var = sumsq[j] / static_cast<double>(count) - s.mean[j] * s.mean[j];
            s.stdev[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    WindowedTensor transform(const WindowedTensor& data) const {
        WindowedTensor out = data;
        for (std::size_t i = 0; i < out.n; ++i)
            for (std::size_t t = 0; t < out.h; ++t)
                for (std::size_t j = 0; j < out.m; ++j)
                    out.at(i, t, j) = static_cast<float>((data.at(i, t, j) - mean[j]) / stdev[j]);
        return out;
    }
};

// ----------------------------------------------------------------------------
// Self-describing serialization.

inline std::string serialize_matrix(const FeatureMatrix& fm, const nlohmann::json& options = {}) {
    nlohmann::json j;
    j["format"] = "faultrank.features.v1";
    j["kind"] = "snapshot";
    j["n"] = fm.n;
    j["m"] = fm.m;
    j["feature_set"] = fm.feature_set;
    j["feature_names"] = fm.feature_names;
    j["sample_ids"] = fm.sample_ids;
    j["labels"] = fm.labels;
    j["values"] = fm.values;
    j["catalog_digest"] = fm.catalog_digest;
    j["options"] = options.is_null() ? nlohmann::json::object() : options;
    return j.dump() + "\n";
}

inline std::string serialize_tensor(const WindowedTensor& wt, const nlohmann::json& options = {}) {
    nlohmann::json j;
    j["format"] = "faultrank.features.v1";
    j["kind"] = "windowed";
    j["n"] = wt.n;
    j["h"] = wt.h;
    j["m"] = wt.m;
    j["feature_set"] = wt.feature_set;
    j["feature_names"] = wt.feature_names;
    nlohmann::json prov = nlohmann::json::array();
    for (const auto& p : wt.provenance) prov.push_back({{"project", p.project}, {"end_pos", p.end_pos}});
    j["provenance"] = std::move(prov);
    j["labels"] = wt.labels;
    j["values"] = wt.values;
    j["catalog_digest"] = wt.catalog_digest;
    j["options"] = options.is_null() ? nlohmann::json::object() : options;
    return j.dump() + "\n";
}

inline std::string features_kind(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "faultrank.features.v1")
        throw SchemaError("not a faultrank features file (format tag mismatch)");
    return j.at("kind").get<std::string>();
}

inline FeatureMatrix deserialize_matrix(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "faultrank.features.v1" || j.value("kind", "") != "snapshot")
        throw SchemaError("not a snapshot features file");
    FeatureMatrix fm;
    fm.n = j.at("n").get<std::size_t>();
    fm.m = j.at("m").get<std::size_t>();
    fm.feature_set = j.at("feature_set").get<std::string>();
    fm.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    fm.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    fm.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    fm.values = j.at("values").get<std::vector<float>>();
    fm.catalog_digest = j.value("catalog_digest", "");
    if (fm.values.size() != fm.n * fm.m || fm.labels.size() != fm.n)
        throw SchemaError("snapshot features file with inconsistent shape");
    return fm;
}

inline WindowedTensor deserialize_tensor(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "faultrank.features.v1" || j.value("kind", "") != "windowed")
        throw SchemaError("not a windowed features file");
    WindowedTensor wt;
    wt.n = j.at("n").get<std::size_t>();
    wt.h = j.at("h").get<std::size_t>();
    wt.m = j.at("m").get<std::size_t>();
    wt.feature_set = j.at("feature_set").get<std::string>();
    wt.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& p : j.at("provenance"))
        wt.provenance.push_back({p.at("project").get<std::string>(), p.at("end_pos").get<std::size_t>()});
    wt.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    wt.values = j.at("values").get<std::vector<float>>();
    wt.catalog_digest = j.value("catalog_digest", "");
    if (wt.values.size() != wt.n * wt.h * wt.m || wt.labels.size() != wt.n)
        throw SchemaError("windowed features file with inconsistent shape");
    return wt;
}

}  // namespace faultrank
