#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/neural.hpp"
#include "faultrank/trees.hpp"

namespace faultrank {

enum class ModelKind { RandomForest, GradientBoosting, XgbLike, Fcnn, Resnet };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::RandomForest: return "random_forest";
        case ModelKind::GradientBoosting: return "gradient_boosting";
        case ModelKind::XgbLike: return "xgb_like";
        case ModelKind::Fcnn: return "fcnn";
        case ModelKind::Resnet: return "resnet";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "random_forest") return ModelKind::RandomForest;
    if (s == "gradient_boosting") return ModelKind::GradientBoosting;
    if (s == "xgb_like") return ModelKind::XgbLike;
    if (s == "fcnn") return ModelKind::Fcnn;
    if (s == "resnet") return ModelKind::Resnet;
    throw ValidationError("unknown model '" + s +
                          "' (expected random_forest|gradient_boosting|xgb_like|fcnn|resnet)");
}

// Temporal models consume windowed tensors; the others consume snapshot
// matrices.
inline bool is_temporal(ModelKind k) { return k == ModelKind::Fcnn || k == ModelKind::Resnet; }

struct ModelOptions {
    std::size_t estimators = 100;
    std::size_t epochs = 500;
    std::size_t batch = 64;
    bool standardize = true;
    std::vector<std::size_t> fcnn_filters;    // empty = (128, 256, 128)
    std::vector<std::size_t> resnet_filters;  // empty = (64, 128, 128)
};

struct TrainedModel {
    ModelKind kind = ModelKind::RandomForest;
    std::optional<ForestModel> forest;
    std::optional<BoostedModel> boosted;
    std::optional<TrainedNetwork> network;

    std::string id() const { return to_string(kind); }

    std::string catalog_digest() const {
        if (forest) return forest->catalog_digest;
        if (boosted) return boosted->catalog_digest;
        if (network) return network->catalog_digest;
        return "";
    }
};

inline TrainedModel fit_model(ModelKind kind, const FeatureMatrix& train, const ModelOptions& opt,
                              std::uint64_t seed) {
    if (is_temporal(kind))
        throw ValidationError("fit_model: " + to_string(kind) +
                              " trains on windowed tensors, not snapshot matrices");
    TrainedModel model;
    model.kind = kind;
    if (kind == ModelKind::RandomForest) {
        ForestParams p;
        p.estimators = opt.estimators;
        model.forest = fit_random_forest(train, p, seed);
    } else {
        BoostParams p = kind == ModelKind::XgbLike ? xgb_like_params() : BoostParams{};
        p.estimators = opt.estimators;
        model.boosted = fit_gradient_boosting(train, p, seed);
    }
    return model;
}

inline TrainedModel fit_model(ModelKind kind, const WindowedTensor& train, const ModelOptions& opt,
                              std::uint64_t seed) {
    if (!is_temporal(kind))
        throw ValidationError("fit_model: " + to_string(kind) +
                              " trains on snapshot matrices, not windowed tensors");
    NetworkSpec spec;
    if (kind == ModelKind::Fcnn) {
        FcnnOptions o;
        if (!opt.fcnn_filters.empty()) {
            if (opt.fcnn_filters.size() != o.kernels.size())
                throw ValidationError("fit_model: fcnn filter override must list " +
                                      std::to_string(o.kernels.size()) + " values");
            o.filters = opt.fcnn_filters;
        }
        spec = build_fcnn(train.h, train.m, o);
    } else {
        ResnetOptions o;
        if (!opt.resnet_filters.empty()) {
            o.block_filters = opt.resnet_filters;
        }
        spec = build_resnet(train.h, train.m, o);
    }
    TrainConfig cfg;
    cfg.epochs = opt.epochs;
    cfg.batch = opt.batch;
    cfg.seed = seed;
    cfg.standardize = opt.standardize;
    TrainedModel model;
    model.kind = kind;
    model.network = faultrank::train(spec, train, cfg);
    return model;
}

inline std::vector<double> score_model(const TrainedModel& model, const FeatureMatrix& data) {
    if (model.forest) return predict_scores(*model.forest, data);
    if (model.boosted) return predict_scores(*model.boosted, data);
    throw ValidationError("score_model: " + model.id() + " scores windowed tensors, got a snapshot matrix");
}

inline std::vector<double> score_model(const TrainedModel& model, const WindowedTensor& data) {
    if (model.network) return predict_scores(*model.network, data);
    throw ValidationError("score_model: " + model.id() + " scores snapshot matrices, got a windowed tensor");
}

inline nlohmann::json model_to_json(const TrainedModel& model) {
    if (model.forest) return forest_to_json(*model.forest);
    if (model.boosted) return boosted_to_json(*model.boosted, to_string(model.kind));
    if (model.network) return network_to_json(*model.network);
    throw PipelineError("model_to_json: empty model");
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "faultrank.model.v1")
        throw SchemaError("not a faultrank model file (format tag mismatch)");
    TrainedModel model;
    model.kind = model_kind_from_string(j.at("kind").get<std::string>());
    switch (model.kind) {
        case ModelKind::RandomForest: model.forest = forest_from_json(j); break;
        case ModelKind::GradientBoosting:
        case ModelKind::XgbLike: model.boosted = boosted_from_json(j); break;
        case ModelKind::Fcnn:
        case ModelKind::Resnet: model.network = network_from_json(j); break;
    }
    return model;
}

}  // namespace faultrank
