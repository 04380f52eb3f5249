#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/rng.hpp"

namespace faultrank {

// ----------------------------------------------------------------------------
// Confusion counts at a decision threshold. score >= threshold is positive.

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
};

inline ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                                 double threshold = 0.5) {
    if (scores.size() != labels.size())
        throw ValidationError("confusion: scores and labels differ in length");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= threshold;
        bool truth = labels[i] != 0;
        if (pred && truth) ++cm.tp;
        else if (pred && !truth) ++cm.fp;
        else if (!pred && !truth) ++cm.tn;
        else ++cm.fn;
    }
    return cm;
}

// All statistics are reported as percentages. A zero denominator yields 0 and
// records the statistic name in `degenerate`.
struct MetricSet {
    double auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double mcc = 0.0;
    double f_measure = 0.0;
    double tnr = 0.0;
    double fpr = 0.0;
    double fnr = 0.0;
    std::vector<std::string> degenerate;
};

// Canonical reporting order for rendered tables.
inline const std::vector<std::string>& statistic_names() {
    static const std::vector<std::string> names = {"AUC",       "Precision", "Recall", "MCC",
                                                   "f-measure", "TNR",       "FPR",    "FNR"};
    return names;
}

inline double statistic_value(const MetricSet& ms, const std::string& name) {
    if (name == "AUC") return ms.auc;
    if (name == "Precision") return ms.precision;
    if (name == "Recall") return ms.recall;
    if (name == "MCC") return ms.mcc;
    if (name == "f-measure") return ms.f_measure;
    if (name == "TNR") return ms.tnr;
    if (name == "FPR") return ms.fpr;
    if (name == "FNR") return ms.fnr;
    throw ValidationError("unknown statistic '" + name + "'");
}

inline MetricSet metrics(const ConfusionMatrix& cm) {
    MetricSet ms;
    auto tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
    auto tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
    auto ratio = [&](double num, double den, const char* stat) {
        if (den <= 0.0) {
            ms.degenerate.emplace_back(stat);
            return 0.0;
        }
        return 100.0 * num / den;
    };
    ms.precision = ratio(tp, tp + fp, "Precision");
    ms.recall = ratio(tp, tp + fn, "Recall");
    if (tp + fn <= 0.0) ms.degenerate.emplace_back("FNR");
    ms.tnr = ratio(tn, tn + fp, "TNR");
    if (tn + fp <= 0.0) ms.degenerate.emplace_back("FPR");
    // FPR and FNR are the complements of TNR and Recall by definition, so the
    // identities FPR = 100 - TNR and FNR = 100 - Recall hold exactly.
    ms.fpr = 100.0 - ms.tnr;
    ms.fnr = 100.0 - ms.recall;
    if (ms.precision + ms.recall > 0.0) {
        ms.f_measure = 2.0 * ms.precision * ms.recall / (ms.precision + ms.recall);
    } else {
        ms.degenerate.emplace_back("f-measure");
    }
    double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom > 0.0) {
        ms.mcc = 100.0 * (tp * tn - fp * fn) / std::sqrt(denom);
    } else {
        ms.degenerate.emplace_back("MCC");
    }
    return ms;
}

// ----------------------------------------------------------------------------
// ROC curve by sweeping the decision threshold over the distinct scores.
// Tied scores move as one group, which makes the trapezoidal AUC equal to the
// probability that a random positive outscores a random negative, counting
// ties as one half.

struct RocPoint {
    double fpr = 0.0, tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1), fpr non-decreasing
    double auc = 0.0;              // in [0,1]
};

inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw ValidationError("roc_curve: scores and labels differ in length");
    std::size_t pos = 0, neg = 0;
    for (auto l : labels) (l ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw ValidationError("roc_curve: need both classes to compute a ROC curve");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    double auc = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) (labels[order[k]] ? tp : fp) += 1;
        double prev_fpr = curve.points.back().fpr, prev_tpr = curve.points.back().tpr;
        double cur_fpr = static_cast<double>(fp) / static_cast<double>(neg);
        double cur_tpr = static_cast<double>(tp) / static_cast<double>(pos);
        auc += (cur_fpr - prev_fpr) * (cur_tpr + prev_tpr) / 2.0;
        curve.points.push_back({cur_fpr, cur_tpr});
        i = j;
    }
    curve.auc = auc;
    return curve;
}

inline double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    return roc_curve(scores, labels).auc;
}

inline std::string roc_points_csv(const RocCurve& curve) {
    std::string out = "fpr,tpr\n";
    for (const auto& p : curve.points) {
        std::ostringstream os;
        os << p.fpr << ',' << p.tpr << '\n';
        out += os.str();
    }
    return out;
}

inline std::string roc_svg(const RocCurve& curve, const std::string& title) {
    const int w = 440, hgt = 440, pad = 40;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << hgt << "\">\n";
    os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "  <text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"monospace\">" << title
       << "</text>\n";
    auto X = [&](double f) { return pad + f * (w - 2 * pad); };
    auto Y = [&](double t) { return hgt - pad - t * (hgt - 2 * pad); };
    os << "  <line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\"" << Y(0)
       << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(0) << "\" y2=\"" << Y(1)
       << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\"" << Y(1)
       << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4\"/>\n";
    os << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (const auto& p : curve.points) os << X(p.fpr) << ',' << Y(p.tpr) << ' ';
    os << "\"/>\n</svg>\n";
    return os.str();
}

// ----------------------------------------------------------------------------
// Cross-validated evaluation. The fit callable receives the training subset
// and a per-fold seed and returns a scorer: a callable mapping the held-out
// subset to per-sample scores in [0,1].

struct EvalReport {
    std::string model_id;
    std::string feature_set;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<MetricSet> per_fold;
    MetricSet mean;
    MetricSet stdev;  // sample standard deviation over folds
};

namespace detail {

inline void accumulate_moments(const std::vector<MetricSet>& folds, MetricSet& mean, MetricSet& stdev) {
    auto moment = [&](auto member) {
        double m = 0.0;
        for (const auto& f : folds) m += f.*member;
        m /= static_cast<double>(folds.size());
        double s = 0.0;
        if (folds.size() > 1) {
            for (const auto& f : folds) {
                double d = f.*member - m;
                s += d * d;
            }
            s = std::sqrt(s / static_cast<double>(folds.size() - 1));
        }
        mean.*member = m;
        stdev.*member = s;
    };
    moment(&MetricSet::auc);
    moment(&MetricSet::precision);
    moment(&MetricSet::recall);
    moment(&MetricSet::mcc);
    moment(&MetricSet::f_measure);
    moment(&MetricSet::tnr);
    moment(&MetricSet::fpr);
    moment(&MetricSet::fnr);
}

}  // namespace detail

template <typename Data, typename FitFn>
struct CvResult {
    EvalReport report;
    // Out-of-fold scores aligned with the sample index of `data`.
    std::vector<double> oof_scores;
};

template <typename Data, typename FitFn>
CvResult<Data, FitFn> cross_validate(const Data& data, const FoldAssignment& folds, FitFn&& fit,
                                     const std::string& model_id, std::uint64_t seed) {
    if (folds.fold_of.size() != data.size())
        throw ValidationError("cross_validate: fold assignment does not match dataset size");
    CvResult<Data, FitFn> result;
    result.report.model_id = model_id;
    result.report.feature_set = data.feature_set;
    result.report.seed = seed;
    result.oof_scores.assign(data.size(), 0.0);
    for (std::size_t f = 0; f < folds.k; ++f) {
        auto train_idx = folds.train_indices(f);
        auto test_idx = folds.test_indices(f);
        Data train = data.subset(train_idx);
        Data test = data.subset(test_idx);
        std::uint64_t fold_seed = derive_seed(seed, "fold", f);
        std::vector<double> scores;
        try {
            auto scorer = fit(train, fold_seed);
            scores = scorer(test);
        } catch (const std::exception& e) {
            throw PipelineError("cross_validate: training failed in fold " + std::to_string(f + 1) +
                                "/" + std::to_string(folds.k) + ": " + e.what());
        }
        if (scores.size() != test.size())
            throw PipelineError("cross_validate: scorer returned wrong number of scores");
        for (std::size_t i = 0; i < test_idx.size(); ++i) result.oof_scores[test_idx[i]] = scores[i];
        MetricSet ms = metrics(confusion(scores, test.labels));
        ms.auc = 100.0 * roc_auc(scores, test.labels);
        result.report.per_fold.push_back(std::move(ms));
        log_info(model_id + ": fold " + std::to_string(f + 1) + "/" + std::to_string(folds.k) +
                 " AUC=" + format_pct(result.report.per_fold.back().auc));
    }
    detail::accumulate_moments(result.report.per_fold, result.report.mean, result.report.stdev);
    return result;
}

// ----------------------------------------------------------------------------
// Rendering: statistics as rows, models as columns, "mean +- stdev" cells.

inline std::string render_summary_table(const std::vector<EvalReport>& reports) {
    std::vector<std::string> headers = {"Statistic (%)"};
    for (const auto& r : reports) headers.push_back(r.model_id);
    std::vector<std::vector<std::string>> rows;
    for (const auto& stat : statistic_names()) {
        std::vector<std::string> row = {stat};
        for (const auto& r : reports)
            row.push_back(format_pct(statistic_value(r.mean, stat)) + " +- " +
                          format_pct(statistic_value(r.stdev, stat)));
        rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) {
        width[c] = headers[c].size();
        for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            os << (c == 0 ? "| " : " | ");
            os << row[c] << std::string(width[c] - row[c].size(), ' ');
        }
        os << " |\n";
    };
    emit(headers);
    os << '|';
    for (std::size_t c = 0; c < headers.size(); ++c) os << std::string(width[c] + 2, '-') << '|';
    os << '\n';
    for (const auto& row : rows) emit(row);
    return os.str();
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    auto metric_json = [](const MetricSet& ms) {
        nlohmann::json j;
        j["auc"] = ms.auc;
        j["precision"] = ms.precision;
        j["recall"] = ms.recall;
        j["mcc"] = ms.mcc;
        j["f_measure"] = ms.f_measure;
        j["tnr"] = ms.tnr;
        j["fpr"] = ms.fpr;
        j["fnr"] = ms.fnr;
        j["degenerate"] = ms.degenerate;
        return j;
    };
    nlohmann::json j;
    j["model_id"] = r.model_id;
    j["feature_set"] = r.feature_set;
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.per_fold) folds.push_back(metric_json(f));
    j["per_fold"] = std::move(folds);
    j["mean"] = metric_json(r.mean);
    j["stdev"] = metric_json(r.stdev);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    auto metric_from = [](const nlohmann::json& m) {
        MetricSet ms;
        ms.auc = m.at("auc").get<double>();
        ms.precision = m.at("precision").get<double>();
        ms.recall = m.at("recall").get<double>();
        ms.mcc = m.at("mcc").get<double>();
        ms.f_measure = m.at("f_measure").get<double>();
        ms.tnr = m.at("tnr").get<double>();
        ms.fpr = m.at("fpr").get<double>();
        ms.fnr = m.at("fnr").get<double>();
        ms.degenerate = m.value("degenerate", std::vector<std::string>{});
        return ms;
    };
    EvalReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.feature_set = j.at("feature_set").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_digest = j.value("config_digest", "");
    for (const auto& f : j.at("per_fold")) r.per_fold.push_back(metric_from(f));
    r.mean = metric_from(j.at("mean"));
    r.stdev = metric_from(j.at("stdev"));
    return r;
}

}  // namespace faultrank
