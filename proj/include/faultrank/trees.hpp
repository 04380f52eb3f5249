#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/rng.hpp"

namespace faultrank {

// ----------------------------------------------------------------------------
// Flat binary decision tree. Internal nodes route `x[feature] <= threshold`
// to `left`, otherwise to `right`; leaves carry a score (class-1 probability
// for classification trees, additive leaf weight for boosted regression
// trees).

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;
    int left = -1, right = -1;
    double value = 0.0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(const float* row) const {
        int at = 0;
        while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(at)];
            at = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }
};

enum class SplitCriterion { Gini, Variance, NewtonGain };

struct TreeParams {
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;
    std::size_t features_per_split = 0;  // 0 = consider every feature
    SplitCriterion criterion = SplitCriterion::Gini;
    double lambda = 0.0;  // L2 regularization on leaf weights (NewtonGain)
};

namespace detail {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    float threshold = 0.0f;
    double gain = 0.0;
};

// One sorted scan per candidate feature. Ties in gain are broken toward the
// lowest feature index and lowest threshold, which the ascending iteration
// order provides for free with a strict improvement test.
template <typename GainFn>
SplitChoice best_split(const FeatureMatrix& X, const std::vector<std::size_t>& idx,
                       const std::vector<std::size_t>& features, std::size_t min_leaf, GainFn&& gain_of) {
    SplitChoice best;
    std::vector<std::pair<float, std::size_t>> order(idx.size());
    for (std::size_t f : features) {
        for (std::size_t i = 0; i < idx.size(); ++i) order[i] = {X.at(idx[i], f), idx[i]};
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t s = 1; s < order.size(); ++s) {
            gain_of.accumulate(order[s - 1].second);
            if (order[s].first == order[s - 1].first) continue;  // not a boundary
            if (s < min_leaf || order.size() - s < min_leaf) continue;
            double g = gain_of.gain();
            if (g > 1e-12 && (!best.found || g > best.gain + 1e-12)) {
                best.found = true;
                best.feature = f;
                best.threshold = 0.5f * (order[s - 1].first + order[s].first);
                best.gain = g;
            }
        }
        gain_of.reset();
    }
    return best;
}

// Gini impurity decrease for binary labels.
struct GiniGain {
    double total_n = 0, total_pos = 0;
    double left_n = 0, left_pos = 0;
    const std::vector<std::uint8_t>* labels = nullptr;
    double parent_impurity = 0;

    void init(const std::vector<std::size_t>& idx, const std::vector<std::uint8_t>& y) {
        labels = &y;
        total_n = static_cast<double>(idx.size());
        total_pos = 0;
        for (std::size_t i : idx) total_pos += y[i];
        double p = total_pos / total_n;
        parent_impurity = 2.0 * p * (1.0 - p);
        reset();
    }
    void reset() { left_n = left_pos = 0; }
    void accumulate(std::size_t sample) {
        left_n += 1;
        left_pos += (*labels)[sample];
    }
    double gain() const {
        double rn = total_n - left_n, rpos = total_pos - left_pos;
        double pl = left_pos / left_n, pr = rpos / rn;
        double child = (left_n * 2.0 * pl * (1.0 - pl) + rn * 2.0 * pr * (1.0 - pr)) / total_n;
        return parent_impurity - child;
    }
};

// Sum-of-squared-error reduction on gradient targets.
struct VarianceGain {
    double total_n = 0, total_g = 0, total_g2 = 0;
    double left_n = 0, left_g = 0;
    const std::vector<double>* grad = nullptr;
    double parent_sse = 0;

    void init(const std::vector<std::size_t>& idx, const std::vector<double>& g) {
        grad = &g;
        total_n = static_cast<double>(idx.size());
        total_g = total_g2 = 0;
        for (std::size_t i : idx) {
            total_g += g[i];
            total_g2 += g[i] * g[i];
        }
        parent_sse = total_g2 - total_g * total_g / total_n;
        reset();
    }
    void reset() { left_n = left_g = 0; }
    void accumulate(std::size_t sample) {
        left_n += 1;
        left_g += (*grad)[sample];
    }
    double gain() const {
        double rn = total_n - left_n, rg = total_g - left_g;
        double child_sse = (total_g2) - (left_g * left_g / left_n + rg * rg / rn);
        return parent_sse - child_sse;
    }
};

// Second-order gain 0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)).
struct NewtonGainFn {
    double total_g = 0, total_h = 0;
    double left_g = 0, left_h = 0;
    double lambda = 0;
    const std::vector<double>* grad = nullptr;
    const std::vector<double>* hess = nullptr;

    void init(const std::vector<std::size_t>& idx, const std::vector<double>& g,
              const std::vector<double>& h, double lam) {
        grad = &g;
        hess = &h;
        lambda = lam;
        total_g = total_h = 0;
        for (std::size_t i : idx) {
            total_g += g[i];
            total_h += h[i];
        }
        reset();
    }
    void reset() { left_g = left_h = 0; }
    void accumulate(std::size_t sample) {
        left_g += (*grad)[sample];
        left_h += (*hess)[sample];
    }
    double gain() const {
        double rg = total_g - left_g, rh = total_h - left_h;
        auto score = [&](double G, double H) { return G * G / (H + lambda + 1e-12); };
        return 0.5 * (score(left_g, left_h) + score(rg, rh) - score(total_g, total_h));
    }
};

}  // namespace detail

// ----------------------------------------------------------------------------
// Classification tree (Gini): leaves store the positive-class fraction.

inline DecisionTree fit_classification_tree(const FeatureMatrix& X, const std::vector<std::size_t>& samples,
                                            const TreeParams& params, Rng& rng) {
    DecisionTree tree;
    struct Frame {
        std::vector<std::size_t> idx;
        std::size_t depth;
        int slot;
    };
    auto leaf = [&](const std::vector<std::size_t>& idx) {
        double pos = 0;
        for (std::size_t i : idx) pos += X.labels[i];
        TreeNode nd;
        nd.value = pos / static_cast<double>(idx.size());
        return nd;
    };
    std::vector<Frame> stack;
    stack.push_back({samples, 0, -1});
    while (!stack.empty()) {
        Frame fr = std::move(stack.back());
        stack.pop_back();
        int my_slot = static_cast<int>(tree.nodes.size());
        if (fr.slot >= 0) {
            TreeNode& parent = tree.nodes[static_cast<std::size_t>(fr.slot)];
            (parent.left < 0 ? parent.left : parent.right) = my_slot;
        }
        bool pure = true;
        for (std::size_t i : fr.idx)
            if (X.labels[i] != X.labels[fr.idx[0]]) {
                pure = false;
                break;
            }
        if (pure || fr.depth >= params.max_depth || fr.idx.size() < 2 * params.min_samples_leaf) {
            tree.nodes.push_back(leaf(fr.idx));
            continue;
        }
        std::vector<std::size_t> features;
        std::size_t k = params.features_per_split == 0 ? X.m : std::min(params.features_per_split, X.m);
        if (k >= X.m) {
            features.resize(X.m);
            std::iota(features.begin(), features.end(), std::size_t{0});
        } else {
            features = sample_without_replacement(X.m, k, rng);
        }
        detail::GiniGain gg;
        gg.init(fr.idx, X.labels);
        auto choice = detail::best_split(X, fr.idx, features, params.min_samples_leaf, gg);
        if (!choice.found) {
            tree.nodes.push_back(leaf(fr.idx));
            continue;
        }
        TreeNode nd;
        nd.feature = static_cast<int>(choice.feature);
        nd.threshold = choice.threshold;
        tree.nodes.push_back(nd);
        std::vector<std::size_t> left, right;
        for (std::size_t i : fr.idx)
            (X.at(i, choice.feature) <= choice.threshold ? left : right).push_back(i);
        // Push right first so left is popped (and assigned) first.
        stack.push_back({std::move(right), fr.depth + 1, my_slot});
        stack.push_back({std::move(left), fr.depth + 1, my_slot});
    }
    return tree;
}

// Regression tree on gradient/hessian targets; leaves store the Newton step
// sum(g) / (sum(h) + lambda).
inline DecisionTree fit_regression_tree(const FeatureMatrix& X, const std::vector<std::size_t>& samples,
                                        const std::vector<double>& grad, const std::vector<double>& hess,
                                        const TreeParams& params) {
    DecisionTree tree;
    struct Frame {
        std::vector<std::size_t> idx;
        std::size_t depth;
        int slot;
    };
    auto leaf = [&](const std::vector<std::size_t>& idx) {
        double g = 0, h = 0;
        for (std::size_t i : idx) {
            g += grad[i];
            h += hess[i];
        }
        TreeNode nd;
        double denom = h + params.lambda;
        nd.value = denom > 1e-12 ? g / denom : 0.0;
        return nd;
    };
    std::vector<std::size_t> features(X.m);
    std::iota(features.begin(), features.end(), std::size_t{0});
    std::vector<Frame> stack;
    stack.push_back({samples, 0, -1});
    while (!stack.empty()) {
        Frame fr = std::move(stack.back());
        stack.pop_back();
        int my_slot = static_cast<int>(tree.nodes.size());
        if (fr.slot >= 0) {
            TreeNode& parent = tree.nodes[static_cast<std::size_t>(fr.slot)];
            (parent.left < 0 ? parent.left : parent.right) = my_slot;
        }
        if (fr.depth >= params.max_depth || fr.idx.size() < 2 * params.min_samples_leaf) {
            tree.nodes.push_back(leaf(fr.idx));
            continue;
        }
        detail::SplitChoice choice;
        if (params.criterion == SplitCriterion::NewtonGain) {
            detail::NewtonGainFn ng;
            ng.init(fr.idx, grad, hess, params.lambda);
            choice = detail::best_split(X, fr.idx, features, params.min_samples_leaf, ng);
        } else {
            detail::VarianceGain vg;
            vg.init(fr.idx, grad);
            choice = detail::best_split(X, fr.idx, features, params.min_samples_leaf, vg);
        }
        if (!choice.found) {
            tree.nodes.push_back(leaf(fr.idx));
            continue;
        }
        TreeNode nd;
        nd.feature = static_cast<int>(choice.feature);
        nd.threshold = choice.threshold;
        tree.nodes.push_back(nd);
        std::vector<std::size_t> left, right;
        for (std::size_t i : fr.idx)
            (X.at(i, choice.feature) <= choice.threshold ? left : right).push_back(i);
        stack.push_back({std::move(right), fr.depth + 1, my_slot});
        stack.push_back({std::move(left), fr.depth + 1, my_slot});
    }
    return tree;
}

// ----------------------------------------------------------------------------
// Random forest: bootstrap bagging + per-split feature subsets.

struct ForestParams {
    std::size_t estimators = 100;
    std::size_t max_depth = 16;
    std::size_t min_samples_leaf = 1;
    std::size_t features_per_split = 0;  // 0 = round(sqrt(M))
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t m = 0;
    ForestParams params;
    std::uint64_t seed = 0;
    std::string catalog_digest;
};

namespace detail {
inline void require_both_classes(const std::vector<std::uint8_t>& labels, const char* who) {
    bool pos = false, neg = false;
    for (auto l : labels) (l ? pos : neg) = true;
    if (!pos || !neg)
        throw ValidationError(std::string(who) + ": training set contains a single class");
}
}  // namespace detail

inline ForestModel fit_random_forest(const FeatureMatrix& train, ForestParams params, std::uint64_t seed) {
    if (train.n < 2) throw ValidationError("fit_random_forest: need at least 2 samples");
    detail::require_both_classes(train.labels, "fit_random_forest");
    ForestModel model;
    model.m = train.m;
    model.seed = seed;
    model.catalog_digest = train.catalog_digest;
    if (params.features_per_split == 0)
        params.features_per_split = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(train.m)))));
    model.params = params;
    TreeParams tp;
    tp.max_depth = params.max_depth;
    tp.min_samples_leaf = params.min_samples_leaf;
    tp.features_per_split = params.features_per_split;
    tp.criterion = SplitCriterion::Gini;
    for (std::size_t t = 0; t < params.estimators; ++t) {
        Rng rng = make_rng(seed, "tree", t);
        std::vector<std::size_t> bootstrap(train.n);
        for (auto& b : bootstrap) b = bounded(rng, train.n);
        model.trees.push_back(fit_classification_tree(train, bootstrap, tp, rng));
    }
    return model;
}

inline std::vector<double> predict_scores(const ForestModel& model, const FeatureMatrix& data) {
    if (data.m != model.m)
        throw ValidationError("predict_scores: feature count mismatch, model expects M=" +
                              std::to_string(model.m) + " but data has M=" + std::to_string(data.m));
    std::vector<double> scores(data.n, 0.0);
    if (model.trees.empty()) return std::vector<double>(data.n, 0.5);
    for (std::size_t i = 0; i < data.n; ++i) {
        double sum = 0;
        for (const auto& tree : model.trees) sum += tree.predict(data.row(i));
        scores[i] = sum / static_cast<double>(model.trees.size());
    }
    return scores;
}

// ----------------------------------------------------------------------------
// Gradient boosting with logistic loss. Stages fit regression trees to the
// negative gradient (label - probability); leaves take a Newton step. The
// xgb-like preset deepens the trees, switches the split gain to the
// second-order formula, and adds L2 on the leaf weights.

struct BoostParams {
    std::size_t estimators = 100;
    double learning_rate = 0.1;
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;
    double lambda = 0.0;
    SplitCriterion criterion = SplitCriterion::Variance;
};

inline BoostParams xgb_like_params() {
    BoostParams p;
    p.learning_rate = 0.3;
    p.max_depth = 6;
    p.lambda = 1.0;
    p.criterion = SplitCriterion::NewtonGain;
    return p;
}

struct BoostedModel {
    std::vector<DecisionTree> trees;
    double learning_rate = 0.1;
    double init_log_odds = 0.0;
    std::size_t m = 0;
    BoostParams params;
    std::uint64_t seed = 0;
    std::string catalog_digest;
    std::vector<double> stage_loss;  // training loss after each accepted stage
};

namespace detail {
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double mean_logistic_loss(const std::vector<double>& raw, const std::vector<std::uint8_t>& labels) {
    double loss = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double p = logistic(raw[i]);
        p = std::min(1.0 - 1e-15, std::max(1e-15, p));
        loss += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss / static_cast<double>(raw.size());
}
}  // namespace detail

inline BoostedModel fit_gradient_boosting(const FeatureMatrix& train, BoostParams params,
                                          std::uint64_t seed) {
    if (train.n < 2) throw ValidationError("fit_gradient_boosting: need at least 2 samples");
    if (params.learning_rate <= 0.0)
        throw ValidationError("fit_gradient_boosting: learning rate must be positive");
    detail::require_both_classes(train.labels, "fit_gradient_boosting");
    BoostedModel model;
    model.m = train.m;
    model.seed = seed;
    model.catalog_digest = train.catalog_digest;
    model.learning_rate = params.learning_rate;
    model.params = params;
    double pos = 0;
    for (auto l : train.labels) pos += l;
    double neg = static_cast<double>(train.n) - pos;
    model.init_log_odds = std::log(pos / neg);

    std::vector<std::size_t> all(train.n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> raw(train.n, model.init_log_odds);
    std::vector<double> grad(train.n), hess(train.n);
    TreeParams tp;
    tp.max_depth = params.max_depth;
    tp.min_samples_leaf = params.min_samples_leaf;
    tp.criterion = params.criterion;
    tp.lambda = params.lambda;

    double prev_loss = detail::mean_logistic_loss(raw, train.labels);
    for (std::size_t stage = 0; stage < params.estimators; ++stage) {
        for (std::size_t i = 0; i < train.n; ++i) {
            double p = detail::logistic(raw[i]);
            grad[i] = static_cast<double>(train.labels[i]) - p;  // negative gradient
            hess[i] = p * (1.0 - p);
        }
        DecisionTree tree = fit_regression_tree(train, all, grad, hess, tp);
        std::vector<double> next_raw = raw;
        for (std::size_t i = 0; i < train.n; ++i)
            next_raw[i] += params.learning_rate * tree.predict(train.row(i));
        double loss = detail::mean_logistic_loss(next_raw, train.labels);
        if (!(loss < prev_loss)) {
            log_info("gradient boosting: loss stopped improving at stage " + std::to_string(stage) +
                     ", keeping " + std::to_string(model.trees.size()) + " trees");
            break;
        }
        model.trees.push_back(std::move(tree));
        raw = std::move(next_raw);
        model.stage_loss.push_back(loss);
        prev_loss = loss;
    }
    return model;
}

inline std::vector<double> predict_scores(const BoostedModel& model, const FeatureMatrix& data) {
    if (data.m != model.m)
        throw ValidationError("predict_scores: feature count mismatch, model expects M=" +
                              std::to_string(model.m) + " but data has M=" + std::to_string(data.m));
    std::vector<double> scores(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
        double raw = model.init_log_odds;
        for (const auto& tree : model.trees) raw += model.learning_rate * tree.predict(data.row(i));
        scores[i] = detail::logistic(raw);
    }
    return scores;
}

// ----------------------------------------------------------------------------
// Serialization (self-describing, with version tag and hyperparameters).

namespace detail {

inline nlohmann::json tree_to_json(const DecisionTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : tree.nodes)
        nodes.push_back({{"f", nd.feature}, {"t", nd.threshold}, {"l", nd.left}, {"r", nd.right}, {"v", nd.value}});
    return nodes;
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
    DecisionTree tree;
    for (const auto& nd : j) {
        TreeNode n;
        n.feature = nd.at("f").get<int>();
        n.threshold = nd.at("t").get<float>();
        n.left = nd.at("l").get<int>();
        n.right = nd.at("r").get<int>();
        n.value = nd.at("v").get<double>();
        tree.nodes.push_back(n);
    }
    return tree;
}

}  // namespace detail

inline nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json j;
    j["format"] = "faultrank.model.v1";
    j["kind"] = "random_forest";
    j["m"] = model.m;
    j["seed"] = model.seed;
    j["catalog_digest"] = model.catalog_digest;
    j["params"] = {{"estimators", model.params.estimators},
                   {"max_depth", model.params.max_depth},
                   {"min_samples_leaf", model.params.min_samples_leaf},
                   {"features_per_split", model.params.features_per_split}};
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(detail::tree_to_json(t));
    j["trees"] = std::move(trees);
    return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "faultrank.model.v1" || j.value("kind", "") != "random_forest")
        throw SchemaError("not a random_forest model file");
    ForestModel model;
    model.m = j.at("m").get<std::size_t>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.catalog_digest = j.value("catalog_digest", "");
    model.params.estimators = j.at("params").at("estimators").get<std::size_t>();
    model.params.max_depth = j.at("params").at("max_depth").get<std::size_t>();
    model.params.min_samples_leaf = j.at("params").at("min_samples_leaf").get<std::size_t>();
    model.params.features_per_split = j.at("params").at("features_per_split").get<std::size_t>();
    for (const auto& t : j.at("trees")) model.trees.push_back(detail::tree_from_json(t));
    return model;
}

inline nlohmann::json boosted_to_json(const BoostedModel& model, const std::string& kind) {
    nlohmann::json j;
    j["format"] = "faultrank.model.v1";
    j["kind"] = kind;
    j["m"] = model.m;
    j["seed"] = model.seed;
    j["catalog_digest"] = model.catalog_digest;
    j["learning_rate"] = model.learning_rate;
    j["init_log_odds"] = model.init_log_odds;
    j["params"] = {{"estimators", model.params.estimators},
                   {"max_depth", model.params.max_depth},
                   {"min_samples_leaf", model.params.min_samples_leaf},
                   {"lambda", model.params.lambda},
                   {"second_order_gain", model.params.criterion == SplitCriterion::NewtonGain}};
    j["stage_loss"] = model.stage_loss;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(detail::tree_to_json(t));
    j["trees"] = std::move(trees);
    return j;
}

inline BoostedModel boosted_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "faultrank.model.v1" ||
        (j.value("kind", "") != "gradient_boosting" && j.value("kind", "") != "xgb_like"))
        throw SchemaError("not a gradient boosting model file");
    BoostedModel model;
    model.m = j.at("m").get<std::size_t>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.catalog_digest = j.value("catalog_digest", "");
    model.learning_rate = j.at("learning_rate").get<double>();
    model.init_log_odds = j.at("init_log_odds").get<double>();
    model.params.estimators = j.at("params").at("estimators").get<std::size_t>();
    model.params.max_depth = j.at("params").at("max_depth").get<std::size_t>();
    model.params.min_samples_leaf = j.at("params").at("min_samples_leaf").get<std::size_t>();
    model.params.lambda = j.at("params").at("lambda").get<double>();
    model.params.criterion = j.at("params").at("second_order_gain").get<bool>()
                                 ? SplitCriterion::NewtonGain
                                 : SplitCriterion::Variance;
    model.params.learning_rate = model.learning_rate;
    model.stage_loss = j.value("stage_loss", std::vector<double>{});
    for (const auto& t : j.at("trees")) model.trees.push_back(detail::tree_from_json(t));
    return model;
}

}  // namespace faultrank
