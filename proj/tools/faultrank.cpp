// faultrank: commit-level fault prediction from static-analysis history.
//
// Pipeline: ingest -> (optional szz) -> featurize -> train -> evaluate ->
// importance -> report. Every stage reads and writes fixed-name artifacts in
// the output directory, so stages can be re-run individually; `run` executes
// them all. All randomness derives from --seed.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "faultrank/pipeline.hpp"

namespace {

struct FlagOverrides {
    std::optional<std::string> config_path;
    std::optional<std::string> issues, measures, labels, rules, history, fix_pattern;
    std::optional<std::string> features;
    std::optional<std::vector<std::string>> models;
    std::optional<std::size_t> window, folds, epochs, batch, estimators, importance_repeats;
    std::optional<double> split, importance_gate, importance_cutoff;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, importance_unit;
    std::optional<bool> deterministic, include_uncategorized, standardize;
    bool quiet = false;
};

faultrank::RunConfig assemble_config(const FlagOverrides& f) {
    faultrank::RunConfig cfg;
    if (f.config_path) {
        std::string text = faultrank::read_file(*f.config_path);
        try {
            cfg = faultrank::config_from_json(nlohmann::json::parse(text));
        } catch (const nlohmann::json::exception& e) {
            throw faultrank::ParseError("config file " + *f.config_path + ": " + e.what());
        }
    }
    if (f.issues) cfg.issues_path = *f.issues;
    if (f.measures) cfg.measures_path = *f.measures;
    if (f.labels) cfg.labels_path = *f.labels;
    if (f.rules) cfg.rules_path = *f.rules;
    if (f.history) cfg.history_path = *f.history;
    if (f.fix_pattern) cfg.fix_pattern = *f.fix_pattern;
    if (f.features) cfg.features = *f.features;
    if (f.models) cfg.models = *f.models;
    if (f.window) cfg.window = *f.window;
    if (f.folds) cfg.folds = *f.folds;
    if (f.split) cfg.split = *f.split;
    if (f.seed) cfg.seed = *f.seed;
    if (f.epochs) cfg.epochs = *f.epochs;
    if (f.batch) cfg.batch = *f.batch;
    if (f.estimators) cfg.estimators = *f.estimators;
    if (f.standardize) cfg.standardize = *f.standardize;
    if (f.importance_gate) cfg.importance_gate = *f.importance_gate;
    if (f.importance_cutoff) cfg.importance_cutoff = *f.importance_cutoff;
    if (f.importance_repeats) cfg.importance_repeats = *f.importance_repeats;
    if (f.importance_unit) cfg.importance_unit = *f.importance_unit;
    if (f.deterministic) cfg.deterministic = *f.deterministic;
    if (f.include_uncategorized) cfg.include_uncategorized = *f.include_uncategorized;
    if (f.out) cfg.out_dir = *f.out;
    cfg.validate();
    return cfg;
}

template <typename Fn>
int guarded(const faultrank::RunConfig& cfg, const std::string& stage, Fn&& fn) {
    try {
        std::filesystem::create_directories(cfg.out_dir);
        fn();
        faultrank::write_manifest(cfg);
        return 0;
    } catch (const std::exception& e) {
        faultrank::write_failure_marker(cfg, stage, e.what());
        std::cerr << "faultrank: " << stage << " failed: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Commit-level fault prediction: SZZ labeling, rule/metric features, "
                 "tree ensembles and 1-D conv networks, cross-validated evaluation, "
                 "and permutation feature importance."};
    app.require_subcommand(1);
    app.fallthrough();

    FlagOverrides f;
    app.add_option("--config", f.config_path, "JSON config file; flags override its values");
    app.add_option("--issues", f.issues, "rule-violation table (CSV/TSV)");
    app.add_option("--measures", f.measures, "per-commit software-metric table (CSV/TSV)");
    app.add_option("--labels", f.labels, "fault-label table (CSV); omit to use szz output");
    app.add_option("--rules", f.rules, "rule metadata table (id, type, severity)");
    app.add_option("--history", f.history, "serialized commit history (JSONL) for szz");
    app.add_option("--fix-pattern", f.fix_pattern, "regex identifying fix commits by message");
    app.add_option("--seed", f.seed, "master seed; every random stream derives from it");
    app.add_option("--features", f.features, "feature set: rules | metrics")
        ->check(CLI::IsMember({"rules", "metrics"}));
    app.add_option("--window", f.window, "history length h for windowed tensors");
    app.add_option("--folds", f.folds, "cross-validation fold count");
    app.add_option("--split", f.split, "train fraction of the held-out split");
    app.add_option("--models", f.models,
                   "models to run (random_forest gradient_boosting xgb_like fcnn resnet)")
        ->delimiter(',');
    app.add_option("--epochs", f.epochs, "network training epochs");
    app.add_option("--batch-size", f.batch, "network mini-batch size");
    app.add_option("--estimators", f.estimators, "tree count for the ensembles");
    app.add_option("--importance-gate", f.importance_gate,
                   "minimum aggregate AUC (%) before importance runs");
    app.add_option("--importance-cutoff", f.importance_cutoff,
                   "importance retention threshold in percentage points");
    app.add_option("--importance-repeats", f.importance_repeats, "permutation repeats per feature");
    app.add_option("--importance-unit", f.importance_unit, "windowed permutation unit: slice | cell")
        ->check(CLI::IsMember({"slice", "cell"}));
    app.add_option("--out", f.out, "output directory for all artifacts");
    app.add_flag("--deterministic,!--no-deterministic", f.deterministic,
                 "record the determinism contract in the manifest (runs are always seeded)");
    app.add_flag("--include-uncategorized", f.include_uncategorized,
                 "keep rules without metadata as feature columns");
    app.add_flag("--standardize,!--no-standardize", f.standardize,
                 "per-feature standardization for network training");
    app.add_flag("--quiet", f.quiet, "suppress progress logging");

    auto* sc_run = app.add_subcommand("run", "execute the full pipeline");
    auto* sc_ingest = app.add_subcommand("ingest", "join violations, metrics, and labels into a dataset");
    auto* sc_szz = app.add_subcommand("szz", "label fault-inducing commits from a serialized history");
    auto* sc_feat = app.add_subcommand("featurize", "build snapshot matrix and windowed tensor");
    auto* sc_train = app.add_subcommand("train", "split off a held-out set and fit every model");
    auto* sc_eval = app.add_subcommand("evaluate", "cross-validated metrics, summary table, ROC files");
    auto* sc_imp = app.add_subcommand("importance", "held-out permutation feature importance");
    auto* sc_report = app.add_subcommand("report", "regenerate reports from stored artifacts");

    CLI11_PARSE(app, argc, argv);
    faultrank::log_enabled() = !f.quiet;

    faultrank::RunConfig cfg;
    try {
        cfg = assemble_config(f);
    } catch (const std::exception& e) {
        std::cerr << "faultrank: " << e.what() << '\n';
        return 1;
    }

    if (sc_run->parsed()) {
        try {
            faultrank::run_all(cfg);
        } catch (const std::exception& e) {
            std::cerr << "faultrank: " << e.what() << '\n';
            return 1;
        }
        std::cout << faultrank::read_file(faultrank::out_path(cfg, faultrank::artifact::kReport));
        return 0;
    }
    if (sc_szz->parsed()) return guarded(cfg, "szz", [&] { faultrank::run_szz(cfg); });
    if (sc_ingest->parsed())
        return guarded(cfg, "ingest", [&] {
            faultrank::write_config(cfg);
            faultrank::run_ingest(cfg);
        });
    if (sc_feat->parsed())
        return guarded(cfg, "featurize", [&] {
            faultrank::run_featurize(cfg, faultrank::load_dataset_artifact(cfg));
        });
    if (sc_train->parsed()) return guarded(cfg, "train", [&] { faultrank::run_train(cfg); });
    if (sc_eval->parsed()) return guarded(cfg, "evaluate", [&] { faultrank::run_evaluate(cfg); });
    if (sc_imp->parsed()) return guarded(cfg, "importance", [&] { faultrank::run_importance(cfg); });
    if (sc_report->parsed())
        return guarded(cfg, "report", [&] { std::cout << faultrank::run_report(cfg); });
    return 0;
}
