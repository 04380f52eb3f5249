#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/eval.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/importance.hpp"
#include "faultrank/ingest.hpp"
#include "faultrank/model.hpp"
#include "faultrank/szz.hpp"

namespace faultrank {

// ----------------------------------------------------------------------------
// RunConfig: every knob of a run; validated up front and serialized verbatim
// into the output artifacts (with the output directory normalized so the same
// run in two different directories yields byte-identical artifacts).

struct RunConfig {
    // Inputs.
    std::string issues_path;
    std::string measures_path;
    std::string labels_path;   // empty when szz supplies the labels
    std::string rules_path;    // optional rule metadata
    std::string history_path;  // optional serialized history for szz
    std::string fix_pattern = R"((?i)\bfix(e[sd])?\b)";

    // Options.
    std::string features = "rules";  // rules | metrics
    bool include_uncategorized = false;
    std::vector<std::string> models = {"random_forest", "gradient_boosting", "xgb_like", "fcnn",
                                       "resnet"};
    std::size_t window = 10;
    std::size_t folds = 10;
    double split = 0.8;
    std::uint64_t seed = 42;
    std::size_t epochs = 500;
    std::size_t batch = 64;
    std::size_t estimators = 100;
    bool standardize = true;
    double importance_gate = 55.0;    // minimum aggregate AUC (%) to run importance
    double importance_cutoff = 1.0;   // percentage points
    std::size_t importance_repeats = 5;
    std::string importance_unit = "slice";  // slice | cell
    bool deterministic = true;  // recorded for the manifest; runs are always seeded
    std::string out_dir = "out";
    std::vector<std::size_t> fcnn_filters, resnet_filters;  // empty = reference widths

    void validate() const {
        feature_set_from_string(features);
        if (models.empty()) throw ValidationError("config: at least one model is required");
        for (const auto& m : models) model_kind_from_string(m);
        if (window < 1) throw ValidationError("config: window must be >= 1");
        if (folds < 2) throw ValidationError("config: folds must be >= 2");
        if (!(split > 0.0 && split < 1.0)) throw ValidationError("config: split must be in (0,1)");
        if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
        if (batch < 1) throw ValidationError("config: batch size must be >= 1");
        if (estimators < 1) throw ValidationError("config: estimators must be >= 1");
        if (importance_gate < 0.0 || importance_gate > 100.0)
            throw ValidationError("config: importance gate must be in [0,100]");
        if (importance_cutoff < 0.0) throw ValidationError("config: importance cutoff must be >= 0");
        if (importance_repeats < 1) throw ValidationError("config: importance repeats must be >= 1");
        if (importance_unit != "slice" && importance_unit != "cell")
            throw ValidationError("config: importance unit must be slice or cell");
        if (out_dir.empty()) throw ValidationError("config: output directory is required");
    }

    bool any_temporal() const {
        for (const auto& m : models)
            if (is_temporal(model_kind_from_string(m))) return true;
        return false;
    }
    bool any_snapshot() const {
        for (const auto& m : models)
            if (!is_temporal(model_kind_from_string(m))) return true;
        return false;
    }

    ModelOptions model_options() const {
        ModelOptions o;
        o.estimators = estimators;
        o.epochs = epochs;
        o.batch = batch;
        o.standardize = standardize;
        o.fcnn_filters = fcnn_filters;
        o.resnet_filters = resnet_filters;
        return o;
    }
};

inline nlohmann::json config_to_json(const RunConfig& c, bool normalize_out_dir) {
    nlohmann::json j;
    j["issues"] = c.issues_path;
    j["measures"] = c.measures_path;
    j["labels"] = c.labels_path;
    j["rules"] = c.rules_path;
    j["history"] = c.history_path;
    j["fix_pattern"] = c.fix_pattern;
    j["features"] = c.features;
    j["include_uncategorized"] = c.include_uncategorized;
    j["models"] = c.models;
    j["window"] = c.window;
    j["folds"] = c.folds;
    j["split"] = c.split;
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["batch"] = c.batch;
    j["estimators"] = c.estimators;
    j["standardize"] = c.standardize;
    j["importance_gate"] = c.importance_gate;
    j["importance_cutoff"] = c.importance_cutoff;
    j["importance_repeats"] = c.importance_repeats;
    j["importance_unit"] = c.importance_unit;
    j["deterministic"] = c.deterministic;
    j["out"] = normalize_out_dir ? "." : c.out_dir;
    j["fcnn_filters"] = c.fcnn_filters;
    j["resnet_filters"] = c.resnet_filters;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.issues_path = j.value("issues", "");
    c.measures_path = j.value("measures", "");
    c.labels_path = j.value("labels", "");
    c.rules_path = j.value("rules", "");
    c.history_path = j.value("history", "");
    c.fix_pattern = j.value("fix_pattern", c.fix_pattern);
    c.features = j.value("features", c.features);
    c.include_uncategorized = j.value("include_uncategorized", c.include_uncategorized);
    c.models = j.value("models", c.models);
    c.window = j.value("window", c.window);
    c.folds = j.value("folds", c.folds);
    c.split = j.value("split", c.split);
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.estimators = j.value("estimators", c.estimators);
    c.standardize = j.value("standardize", c.standardize);
    c.importance_gate = j.value("importance_gate", c.importance_gate);
    c.importance_cutoff = j.value("importance_cutoff", c.importance_cutoff);
    c.importance_repeats = j.value("importance_repeats", c.importance_repeats);
    c.importance_unit = j.value("importance_unit", c.importance_unit);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.out_dir = j.value("out", c.out_dir);
    c.fcnn_filters = j.value("fcnn_filters", c.fcnn_filters);
    c.resnet_filters = j.value("resnet_filters", c.resnet_filters);
    return c;
}

inline std::string config_digest(const RunConfig& c) {
    return digest_hex(config_to_json(c, /*normalize_out_dir=*/true).dump());
}

// ----------------------------------------------------------------------------
// Artifact paths and helpers. All artifacts live under cfg.out_dir with fixed
// names, so every stage can be re-run individually against the same directory.

namespace artifact {
inline const char* kConfig = "config.json";
inline const char* kSzzLabels = "szz_labels.csv";
inline const char* kDataset = "dataset.json";
inline const char* kSnapshot = "features_snapshot.json";
inline const char* kSnapshotTrain = "features_snapshot_train.json";
inline const char* kSnapshotTest = "features_snapshot_test.json";
inline const char* kWindowed = "features_windowed.json";
inline const char* kWindowedTrain = "features_windowed_train.json";
inline const char* kWindowedTest = "features_windowed_test.json";
inline const char* kImportanceJson = "importance.json";
inline const char* kImportanceCsv = "importance.csv";
inline const char* kImportanceTxt = "importance.txt";
inline const char* kImportanceSkipped = "importance_skipped.txt";
inline const char* kSummary = "eval/summary.txt";
inline const char* kReport = "report.txt";
inline const char* kManifest = "manifest.json";
inline const char* kFailure = "failure.json";

inline std::string model_file(const std::string& id) { return "models/" + id + ".json"; }
inline std::string eval_file(const std::string& id) { return "eval/" + id + ".json"; }
inline std::string roc_csv(const std::string& id) { return "eval/roc_" + id + ".csv"; }
inline std::string roc_svg(const std::string& id) { return "eval/roc_" + id + ".svg"; }
}  // namespace artifact

inline std::string out_path(const RunConfig& cfg, const std::string& rel) {
    return (std::filesystem::path(cfg.out_dir) / rel).string();
}

inline void write_artifact(const RunConfig& cfg, const std::string& rel, const std::string& content) {
    std::filesystem::path p = std::filesystem::path(cfg.out_dir) / rel;
    std::filesystem::create_directories(p.parent_path());
    write_file(p.string(), content);
}

inline std::string read_artifact(const RunConfig& cfg, const std::string& rel) {
    std::string p = out_path(cfg, rel);
    if (!file_exists(p))
        throw Error("artifact not found: " + p + " (run the producing stage first)");
    return read_file(p);
}

// JSON artifacts are dumped with sorted keys and a trailing newline; nothing
// time- or path-dependent is embedded, which is what makes reruns
// byte-identical.
inline void write_json_artifact(const RunConfig& cfg, const std::string& rel, const nlohmann::json& j) {
    write_artifact(cfg, rel, j.dump(1, '\t') + "\n");
}

// ----------------------------------------------------------------------------
// Stages.

inline void write_config(const RunConfig& cfg) {
    write_json_artifact(cfg, artifact::kConfig, config_to_json(cfg, /*normalize_out_dir=*/true));
}

// szz: history -> labels table.
inline std::string run_szz(const RunConfig& cfg) {
    if (cfg.history_path.empty())
        throw ValidationError("szz: no history file configured");
    log_info("szz: parsing history " + cfg.history_path);
    History history = parse_history(cfg.history_path);
    FixSet fixes = identify_fix_commits(history, cfg.fix_pattern);
    log_info("szz: " + std::to_string(fixes.fixes.size()) + " fix commits");
    auto labels = locate_inducing(history, fixes);
    log_info("szz: " + std::to_string(labels.size()) + " fault-inducing commits");
    write_artifact(cfg, artifact::kSzzLabels, serialize_labels(labels));
    return out_path(cfg, artifact::kSzzLabels);
}

// ingest: issue/measure/label tables -> joint dataset.
inline JointDataset run_ingest(const RunConfig& cfg) {
    if (cfg.issues_path.empty() || cfg.measures_path.empty())
        throw ValidationError("ingest: issues and measures tables are required");
    std::string labels_path = cfg.labels_path;
    if (labels_path.empty()) {
        std::string szz_out = out_path(cfg, artifact::kSzzLabels);
        if (file_exists(szz_out)) {
            labels_path = szz_out;
            log_info("ingest: using szz-produced labels " + labels_path);
        } else {
            throw ValidationError("ingest: no labels table configured and no szz output present");
        }
    }
    auto issues = load_issues(cfg.issues_path);
    std::size_t cells_filled = 0;
    auto measures = load_measures(cfg.measures_path, &cells_filled);
    auto labels = load_labels(labels_path);
    std::vector<RuleInfo> metadata;
    if (!cfg.rules_path.empty()) metadata = load_rule_metadata(cfg.rules_path);
    RuleCatalog catalog = build_catalog(issues, metadata);
    JointDataset ds = join_dataset(issues, measures, labels, catalog);
    ds.metric_cells_filled = cells_filled;
    log_info("ingest: " + std::to_string(ds.rows.size()) + " commits, " +
             std::to_string(catalog.size()) + " rules (" + std::to_string(catalog.categorized_count()) +
             " categorized)");
    write_artifact(cfg, artifact::kDataset, serialize_dataset(ds));
    return ds;
}

inline JointDataset load_dataset_artifact(const RunConfig& cfg) {
    return deserialize_dataset(read_artifact(cfg, artifact::kDataset));
}

// featurize: dataset -> snapshot matrix and (when temporal models are
// configured) windowed tensor.
inline void run_featurize(const RunConfig& cfg, const JointDataset& ds) {
    FeatureSet fs = feature_set_from_string(cfg.features);
    nlohmann::json options = {{"features", cfg.features},
                              {"include_uncategorized", cfg.include_uncategorized},
                              {"seed", cfg.seed}};
    // The snapshot matrix is always emitted; it doubles as the dataset's
    // model-ready view even for temporal-only runs.
    FeatureMatrix fm = snapshot_matrix(ds, fs, cfg.include_uncategorized);
    log_info("featurize: snapshot matrix " + std::to_string(fm.n) + "x" + std::to_string(fm.m));
    write_artifact(cfg, artifact::kSnapshot, serialize_matrix(fm, options));
    if (cfg.any_temporal()) {
        nlohmann::json wopts = options;
        wopts["window"] = cfg.window;
        wopts["step"] = 1;
        WindowedTensor wt = windowed_tensor(ds, cfg.window, 1, fs, cfg.include_uncategorized);
        log_info("featurize: windowed tensor " + std::to_string(wt.n) + "x" + std::to_string(wt.h) +
                 "x" + std::to_string(wt.m));
        write_artifact(cfg, artifact::kWindowed, serialize_tensor(wt, wopts));
    }
}

// train: features -> per-model files, plus the held-out split both sides.
inline void run_train(const RunConfig& cfg) {
    ModelOptions opts = cfg.model_options();
    if (cfg.any_snapshot()) {
        FeatureMatrix full = deserialize_matrix(read_artifact(cfg, artifact::kSnapshot));
        auto [train_fm, test_fm] = train_test_split(full, cfg.split, derive_seed(cfg.seed, "split", 0));
        write_artifact(cfg, artifact::kSnapshotTrain, serialize_matrix(train_fm));
        write_artifact(cfg, artifact::kSnapshotTest, serialize_matrix(test_fm));
        for (const auto& name : cfg.models) {
            ModelKind kind = model_kind_from_string(name);
            if (is_temporal(kind)) continue;
            log_info("train: fitting " + name + " on " + std::to_string(train_fm.n) + " samples");
            TrainedModel model = fit_model(kind, train_fm, opts, derive_seed(cfg.seed, "model:" + name));
            write_json_artifact(cfg, artifact::model_file(name), model_to_json(model));
        }
    }
    if (cfg.any_temporal()) {
        WindowedTensor full = deserialize_tensor(read_artifact(cfg, artifact::kWindowed));
        auto [train_wt, test_wt] = train_test_split(full, cfg.split, derive_seed(cfg.seed, "split", 1));
        write_artifact(cfg, artifact::kWindowedTrain, serialize_tensor(train_wt));
        write_artifact(cfg, artifact::kWindowedTest, serialize_tensor(test_wt));
        for (const auto& name : cfg.models) {
            ModelKind kind = model_kind_from_string(name);
            if (!is_temporal(kind)) continue;
            log_info("train: fitting " + name + " on " + std::to_string(train_wt.n) + " samples");
            TrainedModel model = fit_model(kind, train_wt, opts, derive_seed(cfg.seed, "model:" + name));
            write_json_artifact(cfg, artifact::model_file(name), model_to_json(model));
        }
    }
}

// evaluate: features -> per-model cross-validated reports, summary table, ROC
// artifacts from the pooled out-of-fold scores.
inline std::vector<EvalReport> run_evaluate(const RunConfig& cfg) {
    ModelOptions opts = cfg.model_options();
    std::string cfg_digest = config_digest(cfg);
    std::vector<EvalReport> reports;

    std::optional<FeatureMatrix> matrix;
    std::optional<FoldAssignment> matrix_folds;
    std::optional<WindowedTensor> tensor;
    std::optional<FoldAssignment> tensor_folds;
    if (cfg.any_snapshot()) {
        matrix = deserialize_matrix(read_artifact(cfg, artifact::kSnapshot));
        matrix_folds = stratified_folds(matrix->labels, cfg.folds, derive_seed(cfg.seed, "folds", 0));
    }
    if (cfg.any_temporal()) {
        tensor = deserialize_tensor(read_artifact(cfg, artifact::kWindowed));
        tensor_folds = stratified_folds(tensor->labels, cfg.folds, derive_seed(cfg.seed, "folds", 1));
    }

    for (const auto& name : cfg.models) {
        ModelKind kind = model_kind_from_string(name);
        std::uint64_t model_seed = derive_seed(cfg.seed, "model:" + name);
        EvalReport report;
        RocCurve pooled;
        if (!is_temporal(kind)) {
            auto fit = [&](const FeatureMatrix& train, std::uint64_t fold_seed) {
                TrainedModel m = fit_model(kind, train, opts, fold_seed);
                return [m](const FeatureMatrix& test) { return score_model(m, test); };
            };
            auto cv = cross_validate(*matrix, *matrix_folds, fit, name, model_seed);
            report = cv.report;
            pooled = roc_curve(cv.oof_scores, matrix->labels);
        } else {
            auto fit = [&](const WindowedTensor& train, std::uint64_t fold_seed) {
                TrainedModel m = fit_model(kind, train, opts, fold_seed);
                auto shared = std::make_shared<TrainedModel>(std::move(m));
                return [shared](const WindowedTensor& test) { return score_model(*shared, test); };
            };
            auto cv = cross_validate(*tensor, *tensor_folds, fit, name, model_seed);
            report = cv.report;
            pooled = roc_curve(cv.oof_scores, tensor->labels);
        }
        report.config_digest = cfg_digest;
        write_json_artifact(cfg, artifact::eval_file(name), report_to_json(report));
        write_artifact(cfg, artifact::roc_csv(name), roc_points_csv(pooled));
        write_artifact(cfg, artifact::roc_svg(name),
                       roc_svg(pooled, name + " pooled out-of-fold ROC (AUC " +
                                           format_pct(100.0 * pooled.auc) + "%)"));
        log_info("evaluate: " + name + " mean AUC " + format_pct(report.mean.auc) + " +- " +
                 format_pct(report.stdev.auc));
        reports.push_back(std::move(report));
    }
    write_artifact(cfg, artifact::kSummary, render_summary_table(reports));
    return reports;
}

// importance: held-out permutation importance across models, gated on the
// best aggregate AUC.
inline bool run_importance(const RunConfig& cfg) {
    // Aggregate (cross-validated mean) AUC per model decides the gate and the
    // reference model.
    std::vector<EvalReport> reports;
    for (const auto& name : cfg.models)
        reports.push_back(report_from_json(nlohmann::json::parse(read_artifact(cfg, artifact::eval_file(name)))));
    std::string best_model;
    double best_auc = -1.0;
    for (const auto& r : reports)
        if (r.mean.auc > best_auc) {
            best_auc = r.mean.auc;
            best_model = r.model_id;
        }
    if (best_auc < cfg.importance_gate) {
        std::string msg = "importance stage skipped: best aggregate AUC " + format_pct(best_auc) +
                          "% is below the configured floor of " + format_pct(cfg.importance_gate) +
                          "%; the models' discrimination is too weak for the feature analysis to " +
                          "be meaningful.\n";
        log_warn(msg);
        write_artifact(cfg, artifact::kImportanceSkipped, msg);
        return false;
    }

    JointDataset ds = load_dataset_artifact(cfg);
    std::string expected_digest = ds.catalog.digest();
    PermutationUnit unit =
        cfg.importance_unit == "cell" ? PermutationUnit::Cell : PermutationUnit::Slice;

    std::optional<FeatureMatrix> matrix_test;
    std::optional<WindowedTensor> tensor_test;
    std::map<std::string, SingleModelImportance> per_model;
    std::vector<std::string> feature_names;
    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
        const std::string& name = cfg.models[mi];
        ModelKind kind = model_kind_from_string(name);
        TrainedModel model =
            model_from_json(nlohmann::json::parse(read_artifact(cfg, artifact::model_file(name))));
        if (model.catalog_digest() != expected_digest)
            throw PipelineError("stale artifact: model '" + name +
                                "' was trained against a different rule catalog (digest " +
                                model.catalog_digest() + " vs " + expected_digest +
                                "); re-run featurize and train");
        std::uint64_t imp_seed = derive_seed(cfg.seed, "importance", mi);
        if (!is_temporal(kind)) {
            if (!matrix_test)
                matrix_test = deserialize_matrix(read_artifact(cfg, artifact::kSnapshotTest));
            if (matrix_test->catalog_digest != expected_digest)
                throw PipelineError("stale artifact: held-out snapshot features do not match the "
                                    "dataset's rule catalog; re-run featurize and train");
            auto scorer = [&model](const FeatureMatrix& d) { return score_model(model, d); };
            per_model[name] =
                permutation_importance(scorer, *matrix_test, imp_seed, cfg.importance_repeats, unit);
            feature_names = matrix_test->feature_names;
        } else {
            if (!tensor_test)
                tensor_test = deserialize_tensor(read_artifact(cfg, artifact::kWindowedTest));
            if (tensor_test->catalog_digest != expected_digest)
                throw PipelineError("stale artifact: held-out windowed features do not match the "
                                    "dataset's rule catalog; re-run featurize and train");
            auto scorer = [&model](const WindowedTensor& d) { return score_model(model, d); };
            per_model[name] =
                permutation_importance(scorer, *tensor_test, imp_seed, cfg.importance_repeats, unit);
            feature_names = tensor_test->feature_names;
        }
        log_info("importance: " + name + " baseline AUC " + format_pct(per_model[name].baseline_auc));
    }

    const RuleCatalog* catalog = cfg.features == "rules" ? &ds.catalog : nullptr;
    std::string eval_set = "held-out " + format_pct(100.0 * (1.0 - cfg.split)) + "% split";
    ImportanceRanking ranking = merge_importances(feature_names, per_model, catalog, cfg.seed, eval_set);
    ImportanceReport report = rank_and_filter(ranking, cfg.importance_cutoff, best_model);
    write_json_artifact(cfg, artifact::kImportanceJson, importance_to_json(report));
    write_artifact(cfg, artifact::kImportanceCsv, importance_csv(report));
    write_artifact(cfg, artifact::kImportanceTxt, render_importance_text(report));
    log_info("importance: " + std::to_string(report.retained.size()) + " features above " +
             format_pct(cfg.importance_cutoff) + " pp (reference " + report.reference_model + ")");
    return true;
}

// report: regenerate the human-readable tables from stored artifacts only.
inline std::string run_report(const RunConfig& cfg) {
    std::vector<EvalReport> reports;
    for (const auto& name : cfg.models) {
        std::string p = out_path(cfg, artifact::eval_file(name));
        if (file_exists(p)) reports.push_back(report_from_json(nlohmann::json::parse(read_file(p))));
    }
    if (reports.empty()) throw Error("report: no evaluation artifacts found; run evaluate first");
    std::ostringstream os;
    os << "Model comparison (" << cfg.folds << "-fold stratified cross-validation, feature set: "
       << cfg.features << ", seed " << cfg.seed << ")\n\n";
    os << render_summary_table(reports) << "\n";
    std::string imp_path = out_path(cfg, artifact::kImportanceJson);
    std::string skip_path = out_path(cfg, artifact::kImportanceSkipped);
    if (file_exists(imp_path)) {
        ImportanceReport imp = importance_from_json(nlohmann::json::parse(read_file(imp_path)));
        os << render_importance_text(imp);
        write_artifact(cfg, artifact::kImportanceTxt, render_importance_text(imp));
    } else if (file_exists(skip_path)) {
        os << read_file(skip_path);
    }
    std::string text = os.str();
    write_artifact(cfg, artifact::kSummary, render_summary_table(reports));
    write_artifact(cfg, artifact::kReport, text);
    return text;
}

// ----------------------------------------------------------------------------
// Manifest: relative path, byte count, and content digest of every artifact
// in the output directory, sorted by path.

inline nlohmann::json build_manifest(const RunConfig& cfg) {
    std::vector<std::string> files;
    std::filesystem::path root(cfg.out_dir);
    for (auto it = std::filesystem::recursive_directory_iterator(root);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        std::string rel = std::filesystem::relative(it->path(), root).generic_string();
        if (rel == artifact::kManifest) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto& rel : files) {
        std::string content = read_file((root / rel).string());
        artifacts.push_back({{"path", rel}, {"bytes", content.size()}, {"digest", digest_hex(content)}});
    }
    nlohmann::json j;
    j["format"] = "faultrank.manifest.v1";
    j["config"] = config_to_json(cfg, /*normalize_out_dir=*/true);
    j["config_digest"] = config_digest(cfg);
    j["seed"] = cfg.seed;
    j["artifacts"] = std::move(artifacts);
    return j;
}

inline void write_manifest(const RunConfig& cfg) {
    write_json_artifact(cfg, artifact::kManifest, build_manifest(cfg));
}

inline void write_failure_marker(const RunConfig& cfg, const std::string& stage,
                                 const std::string& message) {
    try {
        write_json_artifact(cfg, artifact::kFailure,
                            nlohmann::json{{"format", "faultrank.failure.v1"},
                                           {"stage", stage},
                                           {"error", message}});
    } catch (const std::exception&) {
        // Failure while recording a failure: the original error still
        // propagates to the caller.
    }
}

// run: the full pipeline. Partial artifacts are preserved on failure, with a
// marker naming the failing stage.
inline void run_all(const RunConfig& cfg) {
    cfg.validate();
    std::string stage = "setup";
    try {
        std::filesystem::create_directories(cfg.out_dir);
        std::filesystem::remove(out_path(cfg, artifact::kFailure));
        write_config(cfg);
        if (!cfg.history_path.empty() && cfg.labels_path.empty()) {
            stage = "szz";
            run_szz(cfg);
        }
        stage = "ingest";
        JointDataset ds = run_ingest(cfg);
        stage = "featurize";
        run_featurize(cfg, ds);
        stage = "train";
        run_train(cfg);
        stage = "evaluate";
        run_evaluate(cfg);
        stage = "importance";
        run_importance(cfg);
        stage = "report";
        run_report(cfg);
        stage = "manifest";
        write_manifest(cfg);
    } catch (const std::exception& e) {
        write_failure_marker(cfg, stage, e.what());
        try {
            write_manifest(cfg);
        } catch (const std::exception&) {
        }
        throw PipelineError(stage + " stage failed: " + e.what());
    }
}

}  // namespace faultrank
