#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "faultrank/eval.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/neural.hpp"
#include "helpers.hpp"

using namespace faultrank;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

std::size_t count_ops(const NetworkSpec& spec, OpKind kind) {
    std::size_t n = 0;
    for (const auto& op : spec.ops)
        if (op.kind == kind) ++n;
    return n;
}

WindowedTensor tensor_from(std::vector<float> values, std::vector<std::uint8_t> labels, std::size_t h,
                           std::size_t m) {
    WindowedTensor wt;
    wt.n = labels.size();
    wt.h = h;
    wt.m = m;
    wt.values = std::move(values);
    wt.labels = std::move(labels);
    for (std::size_t j = 0; j < m; ++j) wt.feature_names.push_back("f" + std::to_string(j));
    wt.feature_set = "metrics";
    return wt;
}

// Channel 0 rises over the window for positives and falls for negatives, on a
// random per-sample offset; channel 1 is noise. The snapshot mean carries far
// less signal than the temporal direction.
WindowedTensor trend_tensor(std::size_t n, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> offset(-1.0f, 1.0f);
    std::normal_distribution<float> eps(0.0f, 0.05f);
    std::vector<float> values;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t label = i % 2 == 0 ? 1 : 0;
        float base = offset(rng);
        float slope = label ? 0.3f : -0.3f;
        for (std::size_t t = 0; t < h; ++t) {
            values.push_back(base + slope * static_cast<float>(t) + eps(rng));
            values.push_back(offset(rng));
        }
        labels.push_back(label);
    }
    return tensor_from(std::move(values), std::move(labels), h, 2);
}

// Minimal valid graph with no batchnorm, for overflow and layer-level tests.
NetworkSpec plain_spec(std::size_t h, std::size_t m, std::size_t channels = 4, std::size_t kernel = 3) {
    NetworkSpec spec;
    spec.h = h;
    spec.m = m;
    spec.name = "plain";
    spec.ops.push_back({OpKind::Input, -1, -1, 0, m, 1});
    spec.ops.push_back({OpKind::Conv1d, 0, -1, m, channels, kernel});
    spec.ops.push_back({OpKind::Relu, 1, -1, channels, channels, 1});
    spec.ops.push_back({OpKind::Gap, 2, -1, channels, channels, 1});
    spec.ops.push_back({OpKind::Dense, 3, -1, channels, 2, 1});
    return spec;
}

// Residual block with an identity skip: conv-bn-relu-conv-bn, add input, relu.
NetworkSpec residual_spec(std::size_t h, std::size_t c) {
    NetworkSpec spec;
    spec.h = h;
    spec.m = c;
    spec.name = "mini_resnet";
    spec.ops.push_back({OpKind::Input, -1, -1, 0, c, 1});
    spec.ops.push_back({OpKind::Conv1d, 0, -1, c, c, 3});
    spec.ops.push_back({OpKind::BatchNorm, 1, -1, c, c, 1});
    spec.ops.push_back({OpKind::Relu, 2, -1, c, c, 1});
    spec.ops.push_back({OpKind::Conv1d, 3, -1, c, c, 3});
    spec.ops.push_back({OpKind::BatchNorm, 4, -1, c, c, 1});
    spec.ops.push_back({OpKind::Add, 5, 0, c, c, 1});
    spec.ops.push_back({OpKind::Relu, 6, -1, c, c, 1});
    spec.ops.push_back({OpKind::Gap, 7, -1, c, c, 1});
    spec.ops.push_back({OpKind::Dense, 8, -1, c, 2, 1});
    return spec;
}

std::vector<double> random_input(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(count);
    for (auto& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("build_fcnn lays out conv-bn-relu stacks ending in gap and dense") {
    NetworkSpec spec = build_fcnn(10, 24);
    REQUIRE(spec.ops.size() == 12);  // input + 3x(conv,bn,relu) + gap + dense
    CHECK(spec.h == 10);
    CHECK(spec.m == 24);
    CHECK(spec.name == "fcnn");
    CHECK(spec.ops[1].kind == OpKind::Conv1d);
    CHECK(spec.ops[1].in_channels == 24);
    CHECK(spec.ops[1].out_channels == 128);
    CHECK(spec.ops[1].kernel == 8);
    CHECK(spec.ops[4].out_channels == 256);
    CHECK(spec.ops[4].kernel == 5);
    CHECK(spec.ops[7].out_channels == 128);
    CHECK(spec.ops[7].kernel == 3);
    CHECK(spec.ops[10].kind == OpKind::Gap);
    CHECK(spec.ops[11].kind == OpKind::Dense);
    CHECK(spec.ops[11].out_channels == 2);

    SECTION("window length one is a valid temporal degenerate") {
        NetworkSpec tiny = build_fcnn(1, 5, {{4, 4}, {3, 3}});
        Network<float> net(tiny, 1);
        std::vector<float> input(5, 0.5f);
        Tape<float> tape;
        net.forward(input.data(), 1, false, false, tape);
        REQUIRE(tape.act.back().size() == 2);
        CHECK(std::isfinite(tape.act.back()[0]));
    }
    SECTION("builder input validation") {
        REQUIRE_THROWS_AS(build_fcnn(0, 24), ValidationError);
        REQUIRE_THROWS_AS(build_fcnn(10, 0), ValidationError);
        REQUIRE_THROWS_AS(build_fcnn(10, 24, {{8}, {3, 3}}), ValidationError);
        REQUIRE_THROWS_AS(build_fcnn(10, 24, {{}, {}}), ValidationError);
    }
}

TEST_CASE("build_resnet adds projection shortcuts only when channels change") {
    NetworkSpec spec = build_resnet(10, 24);  // blocks 64, 128, 128
    // Blocks 1 and 2 change width and need a projected shortcut (conv+bn);
    // block 3 keeps 128 channels and skips via identity.
    CHECK(count_ops(spec, OpKind::Conv1d) == 11);  // 3 per block + 2 projections
    CHECK(count_ops(spec, OpKind::BatchNorm) == 11);
    CHECK(count_ops(spec, OpKind::Add) == 3);
    CHECK(count_ops(spec, OpKind::Gap) == 1);
    CHECK(count_ops(spec, OpKind::Dense) == 1);

    std::vector<std::size_t> add_ops;
    for (std::size_t i = 0; i < spec.ops.size(); ++i)
        if (spec.ops[i].kind == OpKind::Add) add_ops.push_back(i);
    REQUIRE(add_ops.size() == 3);
    // Projected shortcut: input2 is the projection batchnorm. Identity
    // shortcut: input2 is the previous block's relu output.
    CHECK(spec.ops[static_cast<std::size_t>(spec.ops[add_ops[0]].input2)].kind == OpKind::BatchNorm);
    CHECK(spec.ops[static_cast<std::size_t>(spec.ops[add_ops[1]].input2)].kind == OpKind::BatchNorm);
    CHECK(spec.ops[static_cast<std::size_t>(spec.ops[add_ops[2]].input2)].kind == OpKind::Relu);

    SECTION("identity blocks carry no projection parameters") {
        // Same-width single block: only branch convs and bns allocate tensors.
        NetworkSpec one = build_resnet(4, 6, {{6}, {3, 3, 3}});
        CHECK(count_ops(one, OpKind::Conv1d) == 3);
        Network<float> net(one, 0);
        // conv w+b three times, bn gamma+beta three times, dense w+b.
        CHECK(net.params.size() == 14);
    }
    SECTION("builder input validation") {
        REQUIRE_THROWS_AS(build_resnet(0, 24), ValidationError);
        REQUIRE_THROWS_AS(build_resnet(10, 24, {{64}, {8, 5}}), ValidationError);
    }
}

TEST_CASE("network parameter count matches the layer arithmetic") {
    // conv1 2*3*3+2, bn1 4, conv2 3*3*2+3, bn2 6, conv3 2*3*3+2, bn3 4, dense 2*2+2.
    NetworkSpec spec = build_fcnn(4, 3, {{2, 3, 2}, {3, 3, 3}});
    Network<float> net(spec, 9);
    CHECK(net.param_count() == 81);

    SECTION("construction is deterministic in the seed") {
        Network<float> again(spec, 9);
        Network<float> other(spec, 10);
        REQUIRE(again.params.size() == net.params.size());
        for (std::size_t i = 0; i < net.params.size(); ++i)
            CHECK(again.params[i].value == net.params[i].value);
        bool any_diff = false;
        for (std::size_t i = 0; i < net.params.size(); ++i)
            if (other.params[i].value != net.params[i].value) any_diff = true;
        CHECK(any_diff);
    }
    SECTION("glorot weights stay inside the fan limit; biases start at zero") {
        const auto& conv1_w = net.params[0].value;
        double limit = std::sqrt(6.0 / (3.0 * 3.0 + 2.0 * 3.0));
        for (float w : conv1_w) CHECK(std::fabs(w) <= limit);
        for (float b : net.params[1].value) CHECK(b == 0.0f);
        for (float g : net.params[2].value) CHECK(g == 1.0f);  // bn gamma
        for (float b : net.params[3].value) CHECK(b == 0.0f);  // bn beta
    }
}

TEST_CASE("a zeroed residual branch reduces the block to its shortcut") {
    std::size_t h = 4, c = 3, batch = 3;
    NetworkSpec spec = residual_spec(h, c);
    Network<double> net(spec, 33);
    // Zero the branch: conv1 w/b, bn1 gamma/beta, conv2 w/b, bn2 gamma/beta.
    for (std::size_t p = 0; p < 8; ++p)
        std::fill(net.params[p].value.begin(), net.params[p].value.end(), 0.0);

    NetworkSpec base_spec;
    base_spec.h = h;
    base_spec.m = c;
    base_spec.name = "shortcut_only";
    base_spec.ops.push_back({OpKind::Input, -1, -1, 0, c, 1});
    base_spec.ops.push_back({OpKind::Relu, 0, -1, c, c, 1});
    base_spec.ops.push_back({OpKind::Gap, 1, -1, c, c, 1});
    base_spec.ops.push_back({OpKind::Dense, 2, -1, c, 2, 1});
    Network<double> baseline(base_spec, 0);
    baseline.params[0].value = net.params[8].value;  // dense weights
    baseline.params[1].value = net.params[9].value;  // dense bias

    auto input = random_input(batch * h * c, 5);
    Tape<double> full_tape, base_tape;
    net.forward(input.data(), batch, true, false, full_tape);
    baseline.forward(input.data(), batch, true, false, base_tape);
    REQUIRE(full_tape.act.back().size() == base_tape.act.back().size());
    for (std::size_t k = 0; k < full_tape.act.back().size(); ++k)
        CHECK(full_tape.act.back()[k] == base_tape.act.back()[k]);
}

TEST_CASE("analytic gradients agree with central finite differences") {
    std::size_t batch = 4;
    std::vector<std::uint8_t> labels = {0, 1, 1, 0};

    SECTION("conv + gap + dense") {
        NetworkSpec spec;
        spec.h = 5;
        spec.m = 3;
        spec.name = "conv_only";
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Conv1d, 0, -1, 3, 4, 3});
        spec.ops.push_back({OpKind::Gap, 1, -1, 4, 4, 1});
        spec.ops.push_back({OpKind::Dense, 2, -1, 4, 2, 1});
        auto input = random_input(batch * 5 * 3, 11);
        auto r = gradient_check(spec, input, labels, batch, 21);
        CHECK(r.max_rel_err <= 1e-4);
        CHECK(r.entries_checked == 16 + 4 + 8 + 2);  // capped at 16 per tensor
    }
    SECTION("batchnorm in training mode") {
        NetworkSpec spec;
        spec.h = 5;
        spec.m = 3;
        spec.name = "bn";
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Conv1d, 0, -1, 3, 4, 3});
        spec.ops.push_back({OpKind::BatchNorm, 1, -1, 4, 4, 1});
        spec.ops.push_back({OpKind::Gap, 2, -1, 4, 4, 1});
        spec.ops.push_back({OpKind::Dense, 3, -1, 4, 2, 1});
        auto input = random_input(batch * 5 * 3, 12);
        auto r = gradient_check(spec, input, labels, batch, 22);
        CHECK(r.max_rel_err <= 1e-4);
    }
    SECTION("relu nonlinearity") {
        auto input = random_input(batch * 5 * 3, 13);
        auto r = gradient_check(plain_spec(5, 3), input, labels, batch, 23);
        CHECK(r.max_rel_err <= 1e-4);
    }
    SECTION("residual add with identity skip") {
        auto input = random_input(batch * 4 * 3, 14);
        auto r = gradient_check(residual_spec(4, 3), input, labels, batch, 24);
        CHECK(r.max_rel_err <= 1e-4);
    }
    SECTION("complete small fcnn") {
        NetworkSpec spec = build_fcnn(6, 4, {{4, 6, 4}, {3, 3, 3}});
        auto input = random_input(batch * 6 * 4, 15);
        auto r = gradient_check(spec, input, labels, batch, 25);
        CHECK(r.max_rel_err <= 1e-3);
    }
    SECTION("complete small resnet with projection and identity blocks") {
        NetworkSpec spec = build_resnet(6, 4, {{4, 6}, {3, 3, 3}});
        auto input = random_input(batch * 6 * 4, 16);
        auto r = gradient_check(spec, input, labels, batch, 26);
        CHECK(r.max_rel_err <= 1e-3);
    }
    SECTION("input size is validated") {
        REQUIRE_THROWS_MATCHES(gradient_check(plain_spec(5, 3), {1.0, 2.0}, labels, batch, 0),
                               ValidationError, MessageMatches(ContainsSubstring("input size")));
    }
}

TEST_CASE("small networks learn a temporal trend the snapshot mean hides") {
    WindowedTensor data = trend_tensor(400, 6, 71);
    auto [train_set, test_set] = train_test_split(data, 0.8, 3);

    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch = 32;
    cfg.seed = 5;

    SECTION("fcnn") {
        TrainedNetwork model = train(build_fcnn(6, 2, {{8, 8}, {3, 3}}), train_set, cfg);
        double auc = roc_auc(predict_scores(model, test_set), test_set.labels);
        CHECK(auc >= 0.9);
        CHECK(model.epoch_loss.size() == 40);
    }
    SECTION("resnet") {
        TrainedNetwork model = train(build_resnet(6, 2, {{6, 6}, {3, 3, 3}}), train_set, cfg);
        double auc = roc_auc(predict_scores(model, test_set), test_set.labels);
        CHECK(auc >= 0.9);
    }
}

TEST_CASE("shuffled labels leave held-out AUC near chance") {
    WindowedTensor data = trend_tensor(400, 6, 81);
    Rng rng = make_rng(4, "shuffle_labels");
    auto perm = random_permutation(data.n, rng);
    std::vector<std::uint8_t> shuffled(data.n);
    for (std::size_t i = 0; i < data.n; ++i) shuffled[i] = data.labels[perm[i]];
    data.labels = std::move(shuffled);

    auto [train_set, test_set] = train_test_split(data, 0.8, 7);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch = 32;
    cfg.seed = 6;
    TrainedNetwork model = train(build_fcnn(6, 2, {{8, 8}, {3, 3}}), train_set, cfg);
    double auc = roc_auc(predict_scores(model, test_set), test_set.labels);
    CHECK(auc > 0.43);
    CHECK(auc < 0.57);
}

TEST_CASE("training loss falls from the first epoch to the last") {
    WindowedTensor data = trend_tensor(200, 6, 91);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 32;
    cfg.seed = 8;
    TrainedNetwork model = train(build_fcnn(6, 2, {{6, 6}, {3, 3}}), data, cfg);
    REQUIRE(model.epoch_loss.size() == 5);
    CHECK(model.epoch_loss.back() < model.epoch_loss.front());
    for (double l : model.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("training is deterministic in the seed") {
    WindowedTensor data = trend_tensor(120, 4, 55);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;
    cfg.seed = 10;
    NetworkSpec spec = build_fcnn(4, 2, {{4, 4}, {3, 3}});
    TrainedNetwork a = train(spec, data, cfg);
    TrainedNetwork b = train(spec, data, cfg);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(predict_scores(a, data) == predict_scores(b, data));

    cfg.seed = 11;
    TrainedNetwork c = train(spec, data, cfg);
    CHECK(predict_scores(a, data) != predict_scores(c, data));
}

TEST_CASE("inference is per-sample: batch partition cannot change scores") {
    WindowedTensor data = trend_tensor(70, 4, 65);  // crosses the 64-sample chunk edge
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;
    cfg.seed = 12;
    TrainedNetwork model = train(build_fcnn(4, 2, {{4, 4}, {3, 3}}), data, cfg);

    auto whole = predict_scores(model, data);
    REQUIRE(whole.size() == 70);
    for (std::size_t i = 0; i < data.n; ++i) {
        auto single = predict_scores(model, data.subset({i}));
        REQUIRE(single.size() == 1);
        CHECK(std::fabs(single[0] - whole[i]) <= 1e-9);
    }

    SECTION("identical samples receive identical scores") {
        WindowedTensor dup = data.subset({3, 3});
        auto scores = predict_scores(model, dup);
        CHECK(scores[0] == scores[1]);
    }
    SECTION("scores are proper probabilities") {
        for (double s : whole) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("training input validation") {
    WindowedTensor data = trend_tensor(40, 4, 75);
    NetworkSpec spec = build_fcnn(4, 2, {{4}, {3}});
    TrainConfig cfg;
    cfg.epochs = 1;

    SECTION("shape mismatch names both sides") {
        NetworkSpec wrong = build_fcnn(5, 2, {{4}, {3}});
        REQUIRE_THROWS_MATCHES(train(wrong, data, cfg), ValidationError,
                               MessageMatches(ContainsSubstring("does not match network")));
        WindowedTensor narrow = trend_tensor(10, 4, 76);
        narrow.m = 1;
        narrow.values.resize(narrow.n * narrow.h);
        REQUIRE_THROWS_AS(train(spec, narrow, cfg), ValidationError);
    }
    SECTION("single-class labels are refused") {
        WindowedTensor flat = data;
        std::fill(flat.labels.begin(), flat.labels.end(), std::uint8_t{1});
        REQUIRE_THROWS_MATCHES(train(spec, flat, cfg), ValidationError,
                               MessageMatches(ContainsSubstring("single class")));
    }
    SECTION("epochs and batch must be positive") {
        TrainConfig zero_epochs = cfg;
        zero_epochs.epochs = 0;
        REQUIRE_THROWS_AS(train(spec, data, zero_epochs), ValidationError);
        TrainConfig zero_batch = cfg;
        zero_batch.batch = 0;
        REQUIRE_THROWS_AS(train(spec, data, zero_batch), ValidationError);
    }
    SECTION("prediction also validates the shape") {
        TrainedNetwork model = train(spec, data, cfg);
        WindowedTensor other = trend_tensor(5, 5, 77);
        REQUIRE_THROWS_AS(predict_scores(model, other), ValidationError);
    }
    SECTION("a non-finite loss is reported with its epoch and batch") {
        // Opposite-signed infinities cancel inside the first convolution and
        // the NaN reaches the logits (no relu to clamp it), so the very first
        // batch loss is non-finite.
        NetworkSpec bare;
        bare.h = 4;
        bare.m = 2;
        bare.name = "bare";
        bare.ops.push_back({OpKind::Input, -1, -1, 0, 2, 1});
        bare.ops.push_back({OpKind::Conv1d, 0, -1, 2, 4, 3});
        bare.ops.push_back({OpKind::Gap, 1, -1, 4, 4, 1});
        bare.ops.push_back({OpKind::Dense, 2, -1, 4, 2, 1});
        WindowedTensor huge = data;
        float inf = std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < huge.values.size(); ++i) huge.values[i] = i % 2 ? inf : -inf;
        TrainConfig raw;
        raw.epochs = 5;
        raw.batch = 8;
        raw.standardize = false;
        REQUIRE_THROWS_MATCHES(train(bare, huge, raw), PipelineError,
                               MessageMatches(ContainsSubstring("non-finite") &&
                                              ContainsSubstring("epoch 1, batch 1")));
    }
}

TEST_CASE("trained networks round-trip through JSON with identical predictions") {
    WindowedTensor data = trend_tensor(80, 4, 85);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;
    cfg.seed = 14;
    TrainedNetwork model = train(build_resnet(4, 2, {{4, 4}, {3, 3, 3}}), data, cfg);

    nlohmann::json j = network_to_json(model);
    TrainedNetwork back = network_from_json(j);
    CHECK(back.net.spec.name == "resnet");
    CHECK(back.net.param_count() == model.net.param_count());
    CHECK(back.standardized == model.standardized);
    CHECK(back.std_mean == model.std_mean);
    CHECK(back.epoch_loss == model.epoch_loss);
    CHECK(predict_scores(back, data) == predict_scores(model, data));

    SECTION("format and structure are enforced") {
        nlohmann::json bad = j;
        bad["format"] = "other";
        REQUIRE_THROWS_AS(network_from_json(bad), SchemaError);

        nlohmann::json chopped = j;
        chopped["params"].erase(0);
        REQUIRE_THROWS_AS(network_from_json(chopped), SchemaError);

        nlohmann::json rogue = j;
        rogue["running_stats"][0]["op"] = 0;  // op 0 is the input, not a batchnorm
        REQUIRE_THROWS_AS(network_from_json(rogue), SchemaError);
    }
}

TEST_CASE("invalid network graphs are rejected at construction") {
    SECTION("dense before pooling") {
        NetworkSpec spec;
        spec.h = 2;
        spec.m = 3;
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Dense, 0, -1, 3, 2, 1});
        REQUIRE_THROWS_MATCHES(Network<float>(spec, 0), ValidationError,
                               MessageMatches(ContainsSubstring("pooled")));
    }
    SECTION("conv channel mismatch") {
        NetworkSpec spec;
        spec.h = 2;
        spec.m = 3;
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Conv1d, 0, -1, 4, 4, 3});
        REQUIRE_THROWS_MATCHES(Network<float>(spec, 0), ValidationError,
                               MessageMatches(ContainsSubstring("mismatch")));
    }
    SECTION("forward reference") {
        NetworkSpec spec;
        spec.h = 2;
        spec.m = 3;
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Relu, 5, -1, 3, 3, 1});
        REQUIRE_THROWS_MATCHES(Network<float>(spec, 0), ValidationError,
                               MessageMatches(ContainsSubstring("invalid input")));
    }
    SECTION("graph must end in two logits") {
        NetworkSpec spec;
        spec.h = 2;
        spec.m = 3;
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Gap, 0, -1, 3, 3, 1});
        REQUIRE_THROWS_MATCHES(Network<float>(spec, 0), ValidationError,
                               MessageMatches(ContainsSubstring("2 logits")));
    }
    SECTION("mismatched residual shapes") {
        NetworkSpec spec;
        spec.h = 2;
        spec.m = 3;
        spec.ops.push_back({OpKind::Input, -1, -1, 0, 3, 1});
        spec.ops.push_back({OpKind::Conv1d, 0, -1, 3, 4, 3});
        spec.ops.push_back({OpKind::Add, 1, 0, 4, 4, 1});
        REQUIRE_THROWS_MATCHES(Network<float>(spec, 0), ValidationError,
                               MessageMatches(ContainsSubstring("mismatched shapes")));
    }
}
