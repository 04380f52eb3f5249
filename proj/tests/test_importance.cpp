#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "faultrank/importance.hpp"
#include "faultrank/trees.hpp"
#include "helpers.hpp"

using namespace faultrank;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

FeatureMatrix matrix_from(std::size_t n, std::size_t m, std::vector<float> values,
                          std::vector<std::uint8_t> labels) {
    FeatureMatrix fm;
    fm.n = n;
    fm.m = m;
    fm.values = std::move(values);
    fm.labels = std::move(labels);
    for (std::size_t j = 0; j < m; ++j) fm.feature_names.push_back("f" + std::to_string(j));
    fm.feature_set = "metrics";
    return fm;
}

// Feature 0 ranks samples exactly by label; the rest is seeded noise.
FeatureMatrix oracle_matrix(std::size_t n, std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> values;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t label = i % 2 == 0 ? 1 : 0;
        values.push_back(static_cast<float>(label) * 10.0f + u(rng));
        for (std::size_t j = 1; j < m; ++j) values.push_back(u(rng));
        labels.push_back(label);
    }
    return matrix_from(n, m, std::move(values), std::move(labels));
}

std::vector<float> column(const FeatureMatrix& fm, std::size_t j) {
    std::vector<float> out;
    for (std::size_t i = 0; i < fm.n; ++i) out.push_back(fm.at(i, j));
    return out;
}

std::vector<float> sorted(std::vector<float> v) {
    std::sort(v.begin(), v.end());
    return v;
}

SingleModelImportance hand_importance(double baseline, std::vector<double> deltas) {
    SingleModelImportance imp;
    imp.baseline_auc = baseline;
    imp.delta_auc = std::move(deltas);
    imp.repeats = 5;
    imp.unit = PermutationUnit::Slice;
    return imp;
}

}  // namespace

TEST_CASE("permute_feature shuffles one matrix column and nothing else") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> values;
    for (std::size_t i = 0; i < 40 * 3; ++i) values.push_back(u(rng));
    std::vector<std::uint8_t> labels(40);
    for (std::size_t i = 0; i < 40; ++i) labels[i] = i % 2;
    FeatureMatrix fm = matrix_from(40, 3, values, labels);

    FeatureMatrix shuffled = permute_feature(fm, 1, 99);
    CHECK(sorted(column(shuffled, 1)) == sorted(column(fm, 1)));
    CHECK(column(shuffled, 1) != column(fm, 1));  // n > 5 forbids the identity
    CHECK(column(shuffled, 0) == column(fm, 0));
    CHECK(column(shuffled, 2) == column(fm, 2));
    CHECK(shuffled.labels == fm.labels);

    SECTION("deterministic in the seed") {
        CHECK(permute_feature(fm, 1, 99).values == shuffled.values);
        CHECK(permute_feature(fm, 1, 100).values != shuffled.values);
    }
    SECTION("feature index is validated") {
        REQUIRE_THROWS_MATCHES(permute_feature(fm, 3, 0), ValidationError,
                               MessageMatches(ContainsSubstring("out of range")));
    }
}

TEST_CASE("tensor permutation units move slices whole or cell by cell") {
    std::size_t n = 30, h = 4, m = 2;
    std::vector<float> values;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < h; ++t) {
            values.push_back(static_cast<float>(i * h + t));  // distinct everywhere
            values.push_back(static_cast<float>(1000 + i));
        }
        labels.push_back(i % 2);
    }
    WindowedTensor wt;
    wt.n = n;
    wt.h = h;
    wt.m = m;
    wt.values = values;
    wt.labels = labels;
    wt.feature_names = {"f0", "f1"};
    wt.feature_set = "metrics";

    auto slice_of = [&](const WindowedTensor& d, std::size_t i, std::size_t j) {
        std::vector<float> s;
        for (std::size_t t = 0; t < h; ++t) s.push_back(d.at(i, t, j));
        return s;
    };

    SECTION("slice unit keeps each sample window intact") {
        WindowedTensor out = permute_feature(wt, 0, 7, PermutationUnit::Slice);
        std::set<std::vector<float>> original_slices;
        for (std::size_t i = 0; i < n; ++i) original_slices.insert(slice_of(wt, i, 0));
        bool moved = false;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(original_slices.count(slice_of(out, i, 0)) == 1);
            if (slice_of(out, i, 0) != slice_of(wt, i, 0)) moved = true;
            CHECK(slice_of(out, i, 1) == slice_of(wt, i, 1));  // other feature untouched
        }
        CHECK(moved);
    }
    SECTION("cell unit breaks windows apart") {
        WindowedTensor out = permute_feature(wt, 0, 7, PermutationUnit::Cell);
        std::vector<float> all_before, all_after;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < h; ++t) {
                all_before.push_back(wt.at(i, t, 0));
                all_after.push_back(out.at(i, t, 0));
            }
        CHECK(sorted(all_after) == sorted(all_before));
        std::set<std::vector<float>> original_slices;
        for (std::size_t i = 0; i < n; ++i) original_slices.insert(slice_of(wt, i, 0));
        bool broken = false;
        for (std::size_t i = 0; i < n; ++i)
            if (!original_slices.count(slice_of(out, i, 0))) broken = true;
        CHECK(broken);
    }
    SECTION("feature index is validated") {
        REQUIRE_THROWS_AS(permute_feature(wt, 2, 0, PermutationUnit::Slice), ValidationError);
    }
}

TEST_CASE("permutation importance matches a seed-replicated hand computation") {
    std::size_t n = 50;
    FeatureMatrix fm = oracle_matrix(n, 3, 17);
    auto score = [](const FeatureMatrix& d) {
        std::vector<double> s;
        for (std::size_t i = 0; i < d.n; ++i) s.push_back(d.at(i, 0));
        return s;
    };
    const std::uint64_t seed = 23;
    const std::size_t repeats = 5;
    SingleModelImportance imp = permutation_importance(score, fm, seed, repeats);

    CHECK(imp.baseline_auc == 100.0);  // feature 0 orders the classes perfectly
    CHECK(imp.repeats == repeats);
    REQUIRE(imp.delta_auc.size() == 3);

    // Features the scorer never reads cannot move the AUC.
    CHECK(imp.delta_auc[1] == 0.0);
    CHECK(imp.delta_auc[2] == 0.0);

    // Replicate the feature-0 permutations from the published seed schedule.
    double expected = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
        Rng rng(derive_seed(seed, "permute", 0 * repeats + r));
        auto perm = random_permutation_nonidentity(n, rng);
        std::vector<double> permuted;
        for (std::size_t i = 0; i < n; ++i) permuted.push_back(fm.at(perm[i], 0));
        expected += (1.0 - roc_auc(permuted, fm.labels)) * 100.0;
    }
    expected /= static_cast<double>(repeats);
    CHECK(imp.delta_auc[0] == Catch::Approx(expected).margin(1e-12));
    CHECK(imp.delta_auc[0] > 25.0);  // breaking the only informative feature hurts

    SECTION("repeats must be positive") {
        REQUIRE_THROWS_MATCHES(permutation_importance(score, fm, seed, 0), ValidationError,
                               MessageMatches(ContainsSubstring("repeats")));
    }
    SECTION("one-class data has no defined baseline") {
        FeatureMatrix flat = fm;
        std::fill(flat.labels.begin(), flat.labels.end(), std::uint8_t{1});
        REQUIRE_THROWS_AS(permutation_importance(score, flat, seed), ValidationError);
    }
}

TEST_CASE("slice permutation cannot disturb a feature identical across samples") {
    // Feature 0 holds the same rising window in every sample, so swapping
    // whole slices is a no-op; only cell-level shuffling can scramble it.
    std::size_t n = 24, h = 4;
    std::mt19937_64 noise(5);
    std::uniform_real_distribution<float> u(0.1f, 0.9f);
    WindowedTensor wt;
    wt.n = n;
    wt.h = h;
    wt.m = 2;
    wt.feature_names = {"f0", "f1"};
    wt.feature_set = "metrics";
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t label = i % 2;
        for (std::size_t t = 0; t < h; ++t) {
            wt.values.push_back(static_cast<float>(t));
            wt.values.push_back(static_cast<float>(label) + u(noise));
        }
        wt.labels.push_back(label);
    }
    // Score: the level of feature 1, gated by whether feature 0 still rises.
    auto score = [h](const WindowedTensor& d) {
        std::vector<double> s;
        for (std::size_t i = 0; i < d.n; ++i) {
            double trend = d.at(i, h - 1, 0) - d.at(i, 0, 0);
            double level = 0;
            for (std::size_t t = 0; t < h; ++t) level += d.at(i, t, 1);
            s.push_back(trend > 0 ? level : -level);
        }
        return s;
    };

    SingleModelImportance by_slice = permutation_importance(score, wt, 31, 5, PermutationUnit::Slice);
    SingleModelImportance by_cell = permutation_importance(score, wt, 31, 5, PermutationUnit::Cell);
    CHECK(by_slice.baseline_auc == 100.0);
    CHECK(by_slice.delta_auc[0] == 0.0);  // identical slices swap invisibly
    CHECK(by_cell.delta_auc[0] > 10.0);   // cell shuffling breaks the gate
    CHECK(to_string(by_slice.unit) == "slice");
    CHECK(to_string(by_cell.unit) == "cell");
}

TEST_CASE("merging per-model importances aligns features and rule metadata") {
    std::vector<std::string> names = {"NC", "squid:S1192"};
    std::map<std::string, SingleModelImportance> per_model;
    per_model["rf"] = hand_importance(90.0, {3.0, 0.5});
    per_model["gb"] = hand_importance(85.0, {2.5, 1.5});

    std::vector<IssueEvent> issues;
    issues.push_back({"c1", "p", "squid:S1192", 1});
    RuleCatalog catalog = build_catalog(issues, {{"squid:S1192", "Code Smell", "Major"}});

    ImportanceRanking ranking = merge_importances(names, per_model, &catalog, 77, "training");
    REQUIRE(ranking.features.size() == 2);
    CHECK(ranking.features[0].feature == "NC");
    CHECK(ranking.features[0].rule_type.empty());  // metrics carry no rule metadata
    CHECK(ranking.features[1].feature == "squid:S1192");
    CHECK(ranking.features[1].rule_type == "Code Smell");
    CHECK(ranking.features[1].severity == "Major");
    CHECK(ranking.features[0].delta_auc.at("rf") == 3.0);
    CHECK(ranking.features[0].delta_auc.at("gb") == 2.5);
    CHECK(ranking.baseline_auc.at("rf") == 90.0);
    CHECK(ranking.baseline_auc.at("gb") == 85.0);
    CHECK(ranking.seed == 77);
    CHECK(ranking.evaluation_set == "training");
    CHECK(ranking.repeats == 5);
    CHECK(ranking.unit == "slice");

    SECTION("length mismatches name the offending model") {
        per_model["gb"].delta_auc.push_back(0.0);
        REQUIRE_THROWS_MATCHES(merge_importances(names, per_model, &catalog, 0, "training"),
                               ValidationError, MessageMatches(ContainsSubstring("'gb'")));
    }
    SECTION("the catalog is optional") {
        ImportanceRanking plain = merge_importances(names, per_model, nullptr, 0, "training");
        CHECK(plain.features[1].rule_type.empty());
    }
}

TEST_CASE("ranking sorts by the reference model and keeps rows above the cutoff") {
    std::vector<std::string> names = {"f1", "f2", "f3", "f4", "f5"};
    std::map<std::string, SingleModelImportance> per_model;
    per_model["a"] = hand_importance(80.0, {3.0, -0.5, 1.2, 0.8, 3.0});
    per_model["b"] = hand_importance(70.0, {1.0, 2.0, 3.0, 4.0, 5.0});
    ImportanceRanking ranking = merge_importances(names, per_model, nullptr, 1, "training");

    ImportanceReport report = rank_and_filter(ranking, 1.0);
    CHECK(report.reference_model == "a");  // highest baseline AUC wins

    // Ties on importance fall back to feature-name order.
    REQUIRE(report.ranking.features.size() == 5);
    CHECK(report.ranking.features[0].feature == "f1");
    CHECK(report.ranking.features[1].feature == "f5");
    CHECK(report.ranking.features[2].feature == "f3");
    CHECK(report.ranking.features[3].feature == "f4");
    CHECK(report.ranking.features[4].feature == "f2");
    for (std::size_t i = 0; i < 5; ++i) CHECK(report.ranking.features[i].rank == i + 1);

    // Retention is strict: 0.8 <= cutoff 1.0 stays out.
    CHECK(report.retained == std::vector<std::size_t>{0, 1, 2});
    CHECK(report.below_cutoff_count == 2);
    CHECK(report.below_cutoff_sum == Catch::Approx(0.3).margin(1e-12));
    // retained 7.2 of positive total 8.0.
    CHECK(report.retained_share_pct == Catch::Approx(90.0).margin(1e-12));

    SECTION("baseline ties keep the lexicographically first model") {
        per_model["b"].baseline_auc = 80.0;
        ImportanceRanking tied = merge_importances(names, per_model, nullptr, 1, "training");
        CHECK(rank_and_filter(tied).reference_model == "a");
    }
    SECTION("the reference model can be overridden") {
        ImportanceReport by_b = rank_and_filter(ranking, 1.0, "b");
        CHECK(by_b.reference_model == "b");
        CHECK(by_b.ranking.features[0].feature == "f5");  // b's largest delta
        REQUIRE_THROWS_MATCHES(rank_and_filter(ranking, 1.0, "nope"), ValidationError,
                               MessageMatches(ContainsSubstring("unknown reference model")));
    }
    SECTION("a cutoff above every importance retains nothing") {
        ImportanceReport none = rank_and_filter(ranking, 50.0);
        CHECK(none.retained.empty());
        CHECK(none.retained_share_pct == 0.0);
        CHECK(none.below_cutoff_count == 5);
        CHECK_THAT(render_importance_text(none), ContainsSubstring("(none)"));
    }
    SECTION("input validation") {
        REQUIRE_THROWS_MATCHES(rank_and_filter(ImportanceRanking{}), ValidationError,
                               MessageMatches(ContainsSubstring("empty")));
        REQUIRE_THROWS_MATCHES(rank_and_filter(ranking, -0.5), ValidationError,
                               MessageMatches(ContainsSubstring("nonnegative")));
    }
}

TEST_CASE("importance emission renders the retained table and round-trips JSON") {
    std::vector<std::string> names = {"NC", "squid:S1192", "ND"};
    std::map<std::string, SingleModelImportance> per_model;
    per_model["gb"] = hand_importance(82.0, {1.25, 4.5, -2.0});
    per_model["rf"] = hand_importance(88.0, {2.0, 3.5, 0.25});
    std::vector<IssueEvent> issues;
    issues.push_back({"c1", "p", "squid:S1192", 1});
    RuleCatalog catalog = build_catalog(issues, {{"squid:S1192", "Bug", "Critical"}});
    ImportanceRanking ranking = merge_importances(names, per_model, &catalog, 41, "evaluation");
    ImportanceReport report = rank_and_filter(ranking, 1.0);

    SECTION("csv lists retained rows with per-model columns in id order") {
        CHECK(importance_csv(report) ==
              "feature,type,severity,gb_delta_auc,rf_delta_auc,rank\n"
              "squid:S1192,Bug,Critical,4.50,3.50,1\n"
              "NC,,,1.25,2.00,2\n");
    }
    SECTION("text summary names the reference model and scope") {
        std::string text = render_importance_text(report);
        CHECK_THAT(text, ContainsSubstring("Reference model: rf (baseline AUC 88.00%)"));
        CHECK_THAT(text, ContainsSubstring("Evaluation set: evaluation"));
        CHECK_THAT(text, ContainsSubstring("1. squid:S1192 [Bug, Critical]"));
        CHECK_THAT(text, ContainsSubstring("Below cutoff: 1 features"));
    }
    SECTION("json round-trip preserves every field") {
        nlohmann::json j = importance_to_json(report);
        CHECK(j.at("format") == "faultrank.importance.v1");
        ImportanceReport back = importance_from_json(j);
        CHECK(back.reference_model == report.reference_model);
        CHECK(back.cutoff == report.cutoff);
        CHECK(back.retained == report.retained);
        CHECK(back.retained_share_pct == report.retained_share_pct);
        CHECK(back.below_cutoff_count == report.below_cutoff_count);
        CHECK(back.below_cutoff_sum == report.below_cutoff_sum);
        CHECK(back.ranking.seed == report.ranking.seed);
        CHECK(back.ranking.unit == report.ranking.unit);
        CHECK(back.ranking.evaluation_set == report.ranking.evaluation_set);
        CHECK(back.ranking.baseline_auc == report.ranking.baseline_auc);
        REQUIRE(back.ranking.features.size() == report.ranking.features.size());
        for (std::size_t i = 0; i < back.ranking.features.size(); ++i) {
            CHECK(back.ranking.features[i].feature == report.ranking.features[i].feature);
            CHECK(back.ranking.features[i].rule_type == report.ranking.features[i].rule_type);
            CHECK(back.ranking.features[i].delta_auc == report.ranking.features[i].delta_auc);
            CHECK(back.ranking.features[i].rank == report.ranking.features[i].rank);
        }
        CHECK(importance_to_json(back).dump() == j.dump());

        nlohmann::json bad = j;
        bad["format"] = "faultrank.model.v1";
        REQUIRE_THROWS_AS(importance_from_json(bad), SchemaError);
    }
}

TEST_CASE("a trained forest puts the label-copy feature first") {
    FeatureMatrix fm = oracle_matrix(60, 4, 29);
    ForestParams params;
    params.estimators = 20;
    params.max_depth = 4;
    ForestModel forest = fit_random_forest(fm, params, 3);
    auto score = [&](const FeatureMatrix& d) { return predict_scores(forest, d); };

    SingleModelImportance imp = permutation_importance(score, fm, 47, 5);
    CHECK(imp.baseline_auc > 95.0);
    for (std::size_t j = 1; j < 4; ++j) CHECK(imp.delta_auc[0] > imp.delta_auc[j]);

    std::map<std::string, SingleModelImportance> per_model;
    per_model["random_forest"] = imp;
    ImportanceRanking ranking = merge_importances(fm.feature_names, per_model, nullptr, 47, "training");
    ImportanceReport report = rank_and_filter(ranking, 1.0);
    REQUIRE_FALSE(report.retained.empty());
    CHECK(report.ranking.features[report.retained[0]].feature == "f0");
    CHECK(report.ranking.features[report.retained[0]].rank == 1);
    // Noise features sit well under the label copy's importance.
    for (std::size_t j = 1; j < 4; ++j)
        CHECK(std::fabs(imp.delta_auc[j]) < imp.delta_auc[0] / 2.0);
}
