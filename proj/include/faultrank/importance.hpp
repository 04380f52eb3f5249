#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/dataset.hpp"
#include "faultrank/eval.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/rng.hpp"
#include "faultrank/table.hpp"

namespace faultrank {

// How a feature moves between samples of a windowed tensor. Slice keeps each
// sample's h-length history of the feature together; Cell shuffles every
// (sample, step) value independently.
enum class PermutationUnit { Slice, Cell };

inline std::string to_string(PermutationUnit u) { return u == PermutationUnit::Slice ? "slice" : "cell"; }

// ----------------------------------------------------------------------------
// permute_feature: copy of the data with feature j's values shuffled across
// samples and everything else untouched.

inline FeatureMatrix permute_feature(const FeatureMatrix& data, std::size_t j, std::uint64_t seed) {
    if (j >= data.m)
        throw ValidationError("permute_feature: feature index " + std::to_string(j) +
                              " out of range (M=" + std::to_string(data.m) + ")");
    FeatureMatrix out = data;
    Rng rng(seed);
    auto perm = random_permutation_nonidentity(data.n, rng);
    for (std::size_t i = 0; i < data.n; ++i) out.at(i, j) = data.at(perm[i], j);
    return out;
}

inline WindowedTensor permute_feature(const WindowedTensor& data, std::size_t j, std::uint64_t seed,
                                      PermutationUnit unit = PermutationUnit::Slice) {
    if (j >= data.m)
        throw ValidationError("permute_feature: feature index " + std::to_string(j) +
                              " out of range (M=" + std::to_string(data.m) + ")");
    WindowedTensor out = data;
    Rng rng(seed);
    if (unit == PermutationUnit::Slice) {
        auto perm = random_permutation_nonidentity(data.n, rng);
        for (std::size_t i = 0; i < data.n; ++i)
            for (std::size_t t = 0; t < data.h; ++t) out.at(i, t, j) = data.at(perm[i], t, j);
    } else {
        std::size_t cells = data.n * data.h;
        auto perm = random_permutation_nonidentity(cells, rng);
        for (std::size_t c = 0; c < cells; ++c)
            out.values[perm[c] * data.m + j] = data.values[c * data.m + j];
    }
    return out;
}

// ----------------------------------------------------------------------------
// Per-model importance: mean over `repeats` of (baseline AUC - permuted AUC),
// in percentage points, with no retraining.

struct SingleModelImportance {
    double baseline_auc = 0.0;            // percent
    std::vector<double> delta_auc;        // percentage points, one per feature
    std::size_t repeats = 0;
    PermutationUnit unit = PermutationUnit::Slice;
};

template <typename Data, typename ScoreFn>
SingleModelImportance permutation_importance(ScoreFn&& score, const Data& data, std::uint64_t seed,
                                             std::size_t repeats = 5,
                                             PermutationUnit unit = PermutationUnit::Slice) {
    if (repeats < 1) throw ValidationError("permutation_importance: repeats must be >= 1");
    SingleModelImportance result;
    result.repeats = repeats;
    result.unit = unit;
    std::vector<double> baseline_scores = score(data);
    // roc_auc rejects one-class labels, which makes the baseline undefined.
    double baseline = roc_auc(baseline_scores, data.labels);
    result.baseline_auc = 100.0 * baseline;
    result.delta_auc.assign(data.m, 0.0);
    for (std::size_t j = 0; j < data.m; ++j) {
        double sum = 0;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::uint64_t perm_seed = derive_seed(seed, "permute", j * repeats + r);
            Data shuffled = [&] {
                if constexpr (std::is_same_v<Data, WindowedTensor>)
                    return permute_feature(data, j, perm_seed, unit);
                else
                    return permute_feature(data, j, perm_seed);
            }();
            double permuted = roc_auc(score(shuffled), shuffled.labels);
            sum += (baseline - permuted) * 100.0;
        }
        result.delta_auc[j] = sum / static_cast<double>(repeats);
    }
    return result;
}

// ----------------------------------------------------------------------------
// Multi-model ranking.

struct FeatureImportance {
    std::string feature;
    std::string rule_type, severity;           // empty unless rule metadata applies
    std::map<std::string, double> delta_auc;   // model id -> percentage points
    std::size_t rank = 0;                      // assigned by rank_and_filter
};

struct ImportanceRanking {
    std::vector<FeatureImportance> features;
    std::map<std::string, double> baseline_auc;  // model id -> percent
    std::uint64_t seed = 0;
    std::size_t repeats = 0;
    std::string unit;
    std::string evaluation_set;  // where the permutations were scored
};

inline ImportanceRanking merge_importances(const std::vector<std::string>& feature_names,
                                           const std::map<std::string, SingleModelImportance>& per_model,
                                           const RuleCatalog* catalog, std::uint64_t seed,
                                           const std::string& evaluation_set) {
    ImportanceRanking ranking;
    ranking.seed = seed;
    ranking.evaluation_set = evaluation_set;
    for (const auto& [model_id, imp] : per_model) {
        if (imp.delta_auc.size() != feature_names.size())
            throw ValidationError("merge_importances: model '" + model_id +
                                  "' importance length does not match feature names");
        ranking.baseline_auc[model_id] = imp.baseline_auc;
        ranking.repeats = imp.repeats;
        ranking.unit = to_string(imp.unit);
    }
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        FeatureImportance fi;
        fi.feature = feature_names[j];
        if (catalog) {
            if (auto idx = catalog->index_of(fi.feature)) {
                fi.rule_type = catalog->entries[*idx].type;
                fi.severity = catalog->entries[*idx].severity;
            }
        }
        for (const auto& [model_id, imp] : per_model) fi.delta_auc[model_id] = imp.delta_auc[j];
        ranking.features.push_back(std::move(fi));
    }
    return ranking;
}

struct ImportanceReport {
    ImportanceRanking ranking;          // sorted by the reference model, ranks filled in
    std::string reference_model;
    double cutoff = 1.0;                // percentage points
    std::vector<std::size_t> retained;  // indices into ranking.features
    double retained_share_pct = 0.0;    // retained share of total positive importance
    std::size_t below_cutoff_count = 0;
    double below_cutoff_sum = 0.0;      // reference-model importance of the summarized rows
};

// Sorts by the reference model's importance (the model with the highest
// baseline AUC unless overridden), assigns ranks 1..M, and keeps rows whose
// reference importance exceeds the cutoff.
inline ImportanceReport rank_and_filter(const ImportanceRanking& ranking, double cutoff = 1.0,
                                        const std::string& reference_override = "") {
    if (ranking.features.empty()) throw ValidationError("rank_and_filter: ranking is empty");
    if (cutoff < 0.0) throw ValidationError("rank_and_filter: cutoff must be nonnegative");
    ImportanceReport report;
    report.cutoff = cutoff;
    report.ranking = ranking;
    if (!reference_override.empty()) {
        if (!ranking.baseline_auc.count(reference_override))
            throw ValidationError("rank_and_filter: unknown reference model '" + reference_override + "'");
        report.reference_model = reference_override;
    } else {
        double best = -1.0;
        for (const auto& [model_id, auc] : ranking.baseline_auc)
            if (auc > best) {  // std::map iterates ids ascending, so ties keep the first
                best = auc;
                report.reference_model = model_id;
            }
        if (report.reference_model.empty())
            throw ValidationError("rank_and_filter: ranking carries no models");
    }
    const std::string& ref = report.reference_model;
    std::stable_sort(report.ranking.features.begin(), report.ranking.features.end(),
                     [&](const FeatureImportance& a, const FeatureImportance& b) {
                         double da = a.delta_auc.at(ref), db = b.delta_auc.at(ref);
                         if (da != db) return da > db;
                         return a.feature < b.feature;
                     });
    double total_positive = 0.0, retained_sum = 0.0;
    for (std::size_t i = 0; i < report.ranking.features.size(); ++i) {
        auto& fi = report.ranking.features[i];
        fi.rank = i + 1;
        double d = fi.delta_auc.at(ref);
        total_positive += std::max(d, 0.0);
        if (d > cutoff) {
            report.retained.push_back(i);
            retained_sum += d;
        } else {
            ++report.below_cutoff_count;
            report.below_cutoff_sum += d;
        }
    }
    report.retained_share_pct = total_positive > 0.0 ? 100.0 * retained_sum / total_positive : 0.0;
    return report;
}

// ----------------------------------------------------------------------------
// Emission: delimiter-separated retained table plus JSON round-trip.

inline std::string importance_csv(const ImportanceReport& report) {
    std::vector<std::string> model_ids;
    for (const auto& [model_id, _] : report.ranking.baseline_auc) model_ids.push_back(model_id);
    std::string out = "feature,type,severity";
    for (const auto& m : model_ids) out += "," + m + "_delta_auc";
    out += ",rank\n";
    for (std::size_t i : report.retained) {
        const auto& fi = report.ranking.features[i];
        out += csv_escape(fi.feature) + "," + csv_escape(fi.rule_type) + "," + csv_escape(fi.severity);
        for (const auto& m : model_ids) out += "," + format_pct(fi.delta_auc.at(m));
        out += "," + std::to_string(fi.rank) + "\n";
    }
    return out;
}

inline std::string render_importance_text(const ImportanceReport& report) {
    std::ostringstream os;
    os << "Reference model: " << report.reference_model << " (baseline AUC "
       << format_pct(report.ranking.baseline_auc.at(report.reference_model)) << "%)\n";
    os << "Evaluation set: " << report.ranking.evaluation_set << "; permutation unit: "
       << report.ranking.unit << "; repeats: " << report.ranking.repeats << "\n";
    os << "Importance is model-relative; it inherits the reference model's classification quality.\n\n";
    os << "Features with importance above " << format_pct(report.cutoff) << " percentage points:\n";
    for (std::size_t i : report.retained) {
        const auto& fi = report.ranking.features[i];
        os << "  " << fi.rank << ". " << fi.feature;
        if (!fi.rule_type.empty()) os << " [" << fi.rule_type << ", " << fi.severity << "]";
        for (const auto& [model_id, d] : fi.delta_auc) os << "  " << model_id << "=" << format_pct(d);
        os << "\n";
    }
    if (report.retained.empty()) os << "  (none)\n";
    os << "\nBelow cutoff: " << report.below_cutoff_count << " features (reference importance sum "
       << format_pct(report.below_cutoff_sum) << ")\n";
    os << "Retained rows cover " << format_pct(report.retained_share_pct)
       << "% of the total positive importance.\n";
    return os.str();
}

inline nlohmann::json importance_to_json(const ImportanceReport& report) {
    nlohmann::json j;
    j["format"] = "faultrank.importance.v1";
    j["reference_model"] = report.reference_model;
    j["cutoff"] = report.cutoff;
    j["seed"] = report.ranking.seed;
    j["repeats"] = report.ranking.repeats;
    j["unit"] = report.ranking.unit;
    j["evaluation_set"] = report.ranking.evaluation_set;
    j["baseline_auc"] = report.ranking.baseline_auc;
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& fi : report.ranking.features)
        feats.push_back({{"feature", fi.feature},
                         {"type", fi.rule_type},
                         {"severity", fi.severity},
                         {"delta_auc", fi.delta_auc},
                         {"rank", fi.rank}});
    j["features"] = std::move(feats);
    j["retained"] = report.retained;
    j["retained_share_pct"] = report.retained_share_pct;
    j["below_cutoff_count"] = report.below_cutoff_count;
    j["below_cutoff_sum"] = report.below_cutoff_sum;
    return j;
}

inline ImportanceReport importance_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "faultrank.importance.v1")
        throw SchemaError("not a faultrank importance file (format tag mismatch)");
    ImportanceReport report;
    report.reference_model = j.at("reference_model").get<std::string>();
    report.cutoff = j.at("cutoff").get<double>();
    report.ranking.seed = j.at("seed").get<std::uint64_t>();
    report.ranking.repeats = j.at("repeats").get<std::size_t>();
    report.ranking.unit = j.at("unit").get<std::string>();
    report.ranking.evaluation_set = j.at("evaluation_set").get<std::string>();
    report.ranking.baseline_auc = j.at("baseline_auc").get<std::map<std::string, double>>();
    for (const auto& f : j.at("features")) {
        FeatureImportance fi;
        fi.feature = f.at("feature").get<std::string>();
        fi.rule_type = f.at("type").get<std::string>();
        fi.severity = f.at("severity").get<std::string>();
        fi.delta_auc = f.at("delta_auc").get<std::map<std::string, double>>();
        fi.rank = f.at("rank").get<std::size_t>();
        report.ranking.features.push_back(std::move(fi));
    }
    report.retained = j.at("retained").get<std::vector<std::size_t>>();
    report.retained_share_pct = j.at("retained_share_pct").get<double>();
    report.below_cutoff_count = j.at("below_cutoff_count").get<std::size_t>();
    report.below_cutoff_sum = j.at("below_cutoff_sum").get<double>();
    return report;
}

}  // namespace faultrank
