#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "faultrank/common.hpp"
#include "faultrank/featurize.hpp"
#include "faultrank/rng.hpp"

namespace faultrank {

// ----------------------------------------------------------------------------
// Network description: an op graph in topological order. Each op produces one
// activation; `input`/`input2` refer to producing op indices. Convolutions use
// same-padding so the temporal length is preserved end to end; GAP collapses
// it; the dense head emits 2 logits (softmax applied outside the graph).

enum class OpKind { Input, Conv1d, BatchNorm, Relu, Add, Gap, Dense };

inline std::string to_string(OpKind k) {
    switch (k) {
        case OpKind::Input: return "input";
        case OpKind::Conv1d: return "conv1d";
        case OpKind::BatchNorm: return "batchnorm";
        case OpKind::Relu: return "relu";
        case OpKind::Add: return "add";
        case OpKind::Gap: return "gap";
        case OpKind::Dense: return "dense";
    }
    return "?";
}

inline OpKind op_kind_from_string(const std::string& s) {
    if (s == "input") return OpKind::Input;
    if (s == "conv1d") return OpKind::Conv1d;
    if (s == "batchnorm") return OpKind::BatchNorm;
    if (s == "relu") return OpKind::Relu;
    if (s == "add") return OpKind::Add;
    if (s == "gap") return OpKind::Gap;
    if (s == "dense") return OpKind::Dense;
    throw SchemaError("unknown op kind '" + s + "'");
}

struct LayerSpec {
    OpKind kind = OpKind::Input;
    int input = -1, input2 = -1;
    std::size_t in_channels = 0, out_channels = 0, kernel = 1;
};

struct NetworkSpec {
    std::size_t h = 0, m = 0;
    std::string name;
    std::vector<LayerSpec> ops;
    nlohmann::json meta;  // builder options, for the record
};

// ----------------------------------------------------------------------------
// Builders.

struct FcnnOptions {
    std::vector<std::size_t> filters = {128, 256, 128};
    std::vector<std::size_t> kernels = {8, 5, 3};
};

inline NetworkSpec build_fcnn(std::size_t h, std::size_t m, const FcnnOptions& opt = {}) {
    if (h < 1 || m < 1) throw ValidationError("build_fcnn: h and M must be >= 1");
    if (opt.filters.empty() || opt.filters.size() != opt.kernels.size())
        throw ValidationError("build_fcnn: filters and kernels must be non-empty and equal length");
    NetworkSpec spec;
    spec.h = h;
    spec.m = m;
    spec.name = "fcnn";
    spec.meta = {{"filters", opt.filters}, {"kernels", opt.kernels}};
    spec.ops.push_back({OpKind::Input, -1, -1, 0, m, 1});
    int last = 0;
    std::size_t in_c = m;
    for (std::size_t i = 0; i < opt.filters.size(); ++i) {
        spec.ops.push_back({OpKind::Conv1d, last, -1, in_c, opt.filters[i], opt.kernels[i]});
        last = static_cast<int>(spec.ops.size()) - 1;
        spec.ops.push_back({OpKind::BatchNorm, last, -1, opt.filters[i], opt.filters[i], 1});
        last = static_cast<int>(spec.ops.size()) - 1;
        spec.ops.push_back({OpKind::Relu, last, -1, opt.filters[i], opt.filters[i], 1});
        last = static_cast<int>(spec.ops.size()) - 1;
        in_c = opt.filters[i];
    }
    spec.ops.push_back({OpKind::Gap, last, -1, in_c, in_c, 1});
    last = static_cast<int>(spec.ops.size()) - 1;
    spec.ops.push_back({OpKind::Dense, last, -1, in_c, 2, 1});
    return spec;
}

struct ResnetOptions {
    std::vector<std::size_t> block_filters = {64, 128, 128};
    std::vector<std::size_t> kernels = {8, 5, 3};
};

inline NetworkSpec build_resnet(std::size_t h, std::size_t m, const ResnetOptions& opt = {}) {
    if (h < 1 || m < 1) throw ValidationError("build_resnet: h and M must be >= 1");
    if (opt.block_filters.empty() || opt.kernels.size() != 3)
        throw ValidationError("build_resnet: need block filters and exactly 3 kernels per block");
    NetworkSpec spec;
    spec.h = h;
    spec.m = m;
    spec.name = "resnet";
    spec.meta = {{"block_filters", opt.block_filters}, {"kernels", opt.kernels}};
    spec.ops.push_back({OpKind::Input, -1, -1, 0, m, 1});
    int last = 0;
    std::size_t in_c = m;
    for (std::size_t b = 0; b < opt.block_filters.size(); ++b) {
        int block_in = last;
        std::size_t f = opt.block_filters[b];
        std::size_t branch_c = in_c;
        for (std::size_t i = 0; i < 3; ++i) {
            spec.ops.push_back({OpKind::Conv1d, last, -1, branch_c, f, opt.kernels[i]});
            last = static_cast<int>(spec.ops.size()) - 1;
            spec.ops.push_back({OpKind::BatchNorm, last, -1, f, f, 1});
            last = static_cast<int>(spec.ops.size()) - 1;
            if (i + 1 < 3) {  // no activation after the branch's last batchnorm
                spec.ops.push_back({OpKind::Relu, last, -1, f, f, 1});
                last = static_cast<int>(spec.ops.size()) - 1;
            }
            branch_c = f;
        }
        int branch_out = last;
        int shortcut = block_in;
        if (in_c != f) {  // 1x1 projection when channel counts differ
            spec.ops.push_back({OpKind::Conv1d, block_in, -1, in_c, f, 1});
            shortcut = static_cast<int>(spec.ops.size()) - 1;
            spec.ops.push_back({OpKind::BatchNorm, shortcut, -1, f, f, 1});
            shortcut = static_cast<int>(spec.ops.size()) - 1;
        }
        spec.ops.push_back({OpKind::Add, branch_out, shortcut, f, f, 1});
        last = static_cast<int>(spec.ops.size()) - 1;
        spec.ops.push_back({OpKind::Relu, last, -1, f, f, 1});
        last = static_cast<int>(spec.ops.size()) - 1;
        in_c = f;
    }
    spec.ops.push_back({OpKind::Gap, last, -1, in_c, in_c, 1});
    last = static_cast<int>(spec.ops.size()) - 1;
    spec.ops.push_back({OpKind::Dense, last, -1, in_c, 2, 1});
    return spec;
}

// ----------------------------------------------------------------------------
// Runtime network: parameters, Adadelta state, batchnorm running statistics,
// and forward/backward over a mini-batch. Templated on the arithmetic type so
// training runs in float and gradient checking in double.

template <typename Real>
struct Tape {
    std::size_t batch = 0;
    std::vector<std::vector<Real>> act;      // per-op activations
    std::vector<std::vector<Real>> grad;     // per-op activation gradients
    std::vector<std::vector<Real>> bn_xhat;  // normalized inputs per batchnorm op
    std::vector<std::vector<double>> bn_mu;
    std::vector<std::vector<double>> bn_istd;
};

template <typename Real>
class Network {
  public:
    struct Param {
        std::vector<Real> value, grad, acc_g, acc_dx;
    };
    struct OpRuntime {
        std::size_t len = 0, channels = 0;  // activation shape per sample
        int w = -1, b = -1;                 // conv/dense parameter slots
        int gamma = -1, beta = -1;          // batchnorm parameter slots
    };

    static constexpr double kBnEps = 1e-5;
    static constexpr double kBnMomentum = 0.9;  // kept fraction of the running statistic

    NetworkSpec spec;
    std::vector<Param> params;
    std::vector<OpRuntime> rt;
    std::vector<std::vector<double>> run_mean, run_var;  // per op; filled for batchnorm only

    Network(const NetworkSpec& s, std::uint64_t init_seed) : spec(s) {
        rt.resize(spec.ops.size());
        run_mean.resize(spec.ops.size());
        run_var.resize(spec.ops.size());
        Rng rng(init_seed);
        for (std::size_t i = 0; i < spec.ops.size(); ++i) {
            const LayerSpec& op = spec.ops[i];
            OpRuntime& r = rt[i];
            auto in_shape = [&](int idx) -> const OpRuntime& {
                if (idx < 0 || static_cast<std::size_t>(idx) >= i)
                    throw ValidationError("network spec: op " + std::to_string(i) +
                                          " references invalid input " + std::to_string(idx));
                return rt[static_cast<std::size_t>(idx)];
            };
            switch (op.kind) {
                case OpKind::Input:
                    r.len = spec.h;
                    r.channels = spec.m;
                    break;
                case OpKind::Conv1d: {
                    const OpRuntime& in = in_shape(op.input);
                    if (in.channels != op.in_channels)
                        throw ValidationError("network spec: conv input channels mismatch at op " +
                                              std::to_string(i));
                    r.len = in.len;
                    r.channels = op.out_channels;
                    r.w = alloc_glorot(op.out_channels * op.kernel * op.in_channels,
                                       op.in_channels * op.kernel, op.out_channels * op.kernel, rng);
                    r.b = alloc_zero(op.out_channels);
                    break;
                }
                case OpKind::BatchNorm: {
                    const OpRuntime& in = in_shape(op.input);
                    r.len = in.len;
                    r.channels = in.channels;
                    r.gamma = alloc_const(r.channels, Real(1));
                    r.beta = alloc_zero(r.channels);
                    run_mean[i].assign(r.channels, 0.0);
                    run_var[i].assign(r.channels, 1.0);
                    break;
                }
                case OpKind::Relu: {
                    const OpRuntime& in = in_shape(op.input);
                    r.len = in.len;
                    r.channels = in.channels;
                    break;
                }
                case OpKind::Add: {
                    const OpRuntime& a = in_shape(op.input);
                    const OpRuntime& b = in_shape(op.input2);
                    if (a.len != b.len || a.channels != b.channels)
                        throw ValidationError("network spec: residual add with mismatched shapes at op " +
                                              std::to_string(i));
                    r.len = a.len;
                    r.channels = a.channels;
                    break;
                }
                case OpKind::Gap: {
                    const OpRuntime& in = in_shape(op.input);
                    r.len = 1;
                    r.channels = in.channels;
                    break;
                }
                case OpKind::Dense: {
                    const OpRuntime& in = in_shape(op.input);
                    if (in.len != 1)
                        throw ValidationError("network spec: dense expects pooled input at op " +
                                              std::to_string(i));
                    r.len = 1;
                    r.channels = op.out_channels;
                    r.w = alloc_glorot(op.out_channels * in.channels, in.channels, op.out_channels, rng);
                    r.b = alloc_zero(op.out_channels);
                    break;
                }
            }
        }
        if (rt.back().channels != 2 || rt.back().len != 1)
            throw ValidationError("network spec: final op must emit 2 logits");
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    // Forward pass over `batch` samples laid out (sample, time, channel).
    // In training mode batch statistics drive the batchnorms; running
    // statistics are only touched when update_running is set, keeping
    // repeated evaluations side-effect free for finite differencing.
    void forward(const Real* input, std::size_t batch, bool training, bool update_running,
                 Tape<Real>& tape) {
        tape.batch = batch;
        tape.act.resize(spec.ops.size());
        tape.bn_xhat.resize(spec.ops.size());
        tape.bn_mu.resize(spec.ops.size());
        tape.bn_istd.resize(spec.ops.size());
        for (std::size_t i = 0; i < spec.ops.size(); ++i) {
            const LayerSpec& op = spec.ops[i];
            const OpRuntime& r = rt[i];
            std::vector<Real>& out = tape.act[i];
            out.assign(batch * r.len * r.channels, Real(0));
            switch (op.kind) {
                case OpKind::Input:
                    std::copy(input, input + batch * r.len * r.channels, out.begin());
                    break;
                case OpKind::Conv1d:
                    forward_conv(op, r, tape.act[static_cast<std::size_t>(op.input)], out, batch);
                    break;
                case OpKind::BatchNorm:
                    forward_bn(i, op, r, tape.act[static_cast<std::size_t>(op.input)], out, batch,
                               training, update_running, tape);
                    break;
                case OpKind::Relu: {
                    const auto& in = tape.act[static_cast<std::size_t>(op.input)];
                    for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[k] > Real(0) ? in[k] : Real(0);
                    break;
                }
                case OpKind::Add: {
                    const auto& a = tape.act[static_cast<std::size_t>(op.input)];
                    const auto& b = tape.act[static_cast<std::size_t>(op.input2)];
                    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
                    break;
                }
                case OpKind::Gap: {
                    const auto& in = tape.act[static_cast<std::size_t>(op.input)];
                    const OpRuntime& rin = rt[static_cast<std::size_t>(op.input)];
                    for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t c = 0; c < r.channels; ++c) {
                            double sum = 0;
                            for (std::size_t t = 0; t < rin.len; ++t)
                                sum += in[(n * rin.len + t) * rin.channels + c];
                            out[n * r.channels + c] = static_cast<Real>(sum / static_cast<double>(rin.len));
                        }
                    break;
                }
                case OpKind::Dense: {
                    const auto& in = tape.act[static_cast<std::size_t>(op.input)];
                    const OpRuntime& rin = rt[static_cast<std::size_t>(op.input)];
                    const auto& W = params[static_cast<std::size_t>(r.w)].value;
                    const auto& B = params[static_cast<std::size_t>(r.b)].value;
                    for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t j = 0; j < r.channels; ++j) {
                            double acc = B[j];
                            for (std::size_t c = 0; c < rin.channels; ++c)
                                acc += static_cast<double>(W[j * rin.channels + c]) * in[n * rin.channels + c];
                            out[n * r.channels + j] = static_cast<Real>(acc);
                        }
                    break;
                }
            }
        }
    }

    // Mean softmax cross-entropy of the logits already on the tape.
    double loss_from_tape(const Tape<Real>& tape, const std::vector<std::uint8_t>& labels) const {
        const auto& logits = tape.act.back();
        double loss = 0;
        for (std::size_t n = 0; n < tape.batch; ++n) {
            double z0 = logits[n * 2], z1 = logits[n * 2 + 1];
            double mx = std::max(z0, z1);
            double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
            double p = (labels[n] ? e1 : e0) / (e0 + e1);
            loss -= std::log(std::max(p, 1e-15));
        }
        return loss / static_cast<double>(tape.batch);
    }

    // Backward from softmax cross-entropy; accumulates parameter gradients
    // (zeroed first) and returns the mean batch loss.
    double backward(Tape<Real>& tape, const std::vector<std::uint8_t>& labels) {
        for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), Real(0));
        tape.grad.resize(spec.ops.size());
        for (std::size_t i = 0; i < spec.ops.size(); ++i)
            tape.grad[i].assign(tape.act[i].size(), Real(0));
        const auto& logits = tape.act.back();
        auto& dlogits = tape.grad.back();
        double loss = 0;
        double inv_batch = 1.0 / static_cast<double>(tape.batch);
        for (std::size_t n = 0; n < tape.batch; ++n) {
            double z0 = logits[n * 2], z1 = logits[n * 2 + 1];
            double mx = std::max(z0, z1);
            double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
            double zs = e0 + e1;
            double p0 = e0 / zs, p1 = e1 / zs;
            loss -= std::log(std::max(labels[n] ? p1 : p0, 1e-15));
            dlogits[n * 2] = static_cast<Real>((p0 - (labels[n] ? 0.0 : 1.0)) * inv_batch);
            dlogits[n * 2 + 1] = static_cast<Real>((p1 - (labels[n] ? 1.0 : 0.0)) * inv_batch);
        }
        loss *= inv_batch;

        for (std::size_t ii = spec.ops.size(); ii-- > 0;) {
            const LayerSpec& op = spec.ops[ii];
            const OpRuntime& r = rt[ii];
            const auto& gout = tape.grad[ii];
            switch (op.kind) {
                case OpKind::Input:
                    break;
                case OpKind::Conv1d:
                    backward_conv(op, r, tape, ii);
                    break;
                case OpKind::BatchNorm:
                    backward_bn(op, r, tape, ii);
                    break;
                case OpKind::Relu: {
                    const auto& in = tape.act[static_cast<std::size_t>(op.input)];
                    auto& gin = tape.grad[static_cast<std::size_t>(op.input)];
                    for (std::size_t k = 0; k < gout.size(); ++k)
                        if (in[k] > Real(0)) gin[k] += gout[k];
                    break;
                }
                case OpKind::Add: {
                    auto& ga = tape.grad[static_cast<std::size_t>(op.input)];
                    auto& gb = tape.grad[static_cast<std::size_t>(op.input2)];
                    for (std::size_t k = 0; k < gout.size(); ++k) {
                        ga[k] += gout[k];
                        gb[k] += gout[k];
                    }
                    break;
                }
                case OpKind::Gap: {
                    auto& gin = tape.grad[static_cast<std::size_t>(op.input)];
                    const OpRuntime& rin = rt[static_cast<std::size_t>(op.input)];
                    Real inv = static_cast<Real>(1.0 / static_cast<double>(rin.len));
                    for (std::size_t n = 0; n < tape.batch; ++n)
                        for (std::size_t c = 0; c < r.channels; ++c) {
                            Real g = gout[n * r.channels + c] * inv;
                            for (std::size_t t = 0; t < rin.len; ++t)
                                gin[(n * rin.len + t) * rin.channels + c] += g;
                        }
                    break;
                }
                case OpKind::Dense: {
                    const auto& in = tape.act[static_cast<std::size_t>(op.input)];
                    auto& gin = tape.grad[static_cast<std::size_t>(op.input)];
                    const OpRuntime& rin = rt[static_cast<std::size_t>(op.input)];
                    const auto& W = params[static_cast<std::size_t>(r.w)].value;
                    auto& gW = params[static_cast<std::size_t>(r.w)].grad;
                    auto& gB = params[static_cast<std::size_t>(r.b)].grad;
                    for (std::size_t n = 0; n < tape.batch; ++n)
                        for (std::size_t j = 0; j < r.channels; ++j) {
                            Real g = gout[n * r.channels + j];
                            gB[j] += g;
                            for (std::size_t c = 0; c < rin.channels; ++c) {
                                gW[j * rin.channels + c] += g * in[n * rin.channels + c];
                                gin[n * rin.channels + c] += g * W[j * rin.channels + c];
                            }
                        }
                    break;
                }
            }
        }
        return loss;
    }

    void adadelta_step(double rho, double eps) {
        for (auto& p : params) {
            for (std::size_t k = 0; k < p.value.size(); ++k) {
                double g = p.grad[k];
                double ag = rho * p.acc_g[k] + (1.0 - rho) * g * g;
                double dx = -std::sqrt((p.acc_dx[k] + eps) / (ag + eps)) * g;
                double adx = rho * p.acc_dx[k] + (1.0 - rho) * dx * dx;
                p.acc_g[k] = static_cast<Real>(ag);
                p.acc_dx[k] = static_cast<Real>(adx);
                p.value[k] = static_cast<Real>(p.value[k] + dx);
            }
        }
    }

  private:
    int alloc_zero(std::size_t n) {
        params.push_back({std::vector<Real>(n, Real(0)), std::vector<Real>(n, Real(0)),
                          std::vector<Real>(n, Real(0)), std::vector<Real>(n, Real(0))});
        return static_cast<int>(params.size()) - 1;
    }
    int alloc_const(std::size_t n, Real v) {
        int id = alloc_zero(n);
        std::fill(params[static_cast<std::size_t>(id)].value.begin(),
                  params[static_cast<std::size_t>(id)].value.end(), v);
        return id;
    }
    int alloc_glorot(std::size_t n, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        int id = alloc_zero(n);
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : params[static_cast<std::size_t>(id)].value) v = static_cast<Real>(dist(rng));
        return id;
    }

    // Same padding: left (K-1)/2, right K/2. Weight layout (oc, k, ic).
    void forward_conv(const LayerSpec& op, const OpRuntime& r, const std::vector<Real>& in,
                      std::vector<Real>& out, std::size_t batch) const {
        std::size_t len = r.len, inC = op.in_channels, outC = op.out_channels, K = op.kernel;
        std::size_t pad = (K - 1) / 2;
        const auto& W = params[static_cast<std::size_t>(r.w)].value;
        const auto& B = params[static_cast<std::size_t>(r.b)].value;
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t oc = 0; oc < outC; ++oc) {
                    double acc = B[oc];
                    for (std::size_t k = 0; k < K; ++k) {
                        std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
                        if (p < 0 || p >= static_cast<std::ptrdiff_t>(len)) continue;
                        const Real* xin = &in[(n * len + static_cast<std::size_t>(p)) * inC];
                        const Real* w = &W[(oc * K + k) * inC];
                        for (std::size_t ic = 0; ic < inC; ++ic)
                            acc += static_cast<double>(w[ic]) * xin[ic];
                    }
                    out[(n * len + t) * outC + oc] = static_cast<Real>(acc);
                }
    }

    void backward_conv(const LayerSpec& op, const OpRuntime& r, Tape<Real>& tape, std::size_t op_idx) {
        std::size_t len = r.len, inC = op.in_channels, outC = op.out_channels, K = op.kernel;
        std::size_t pad = (K - 1) / 2;
        const auto& in = tape.act[static_cast<std::size_t>(op.input)];
        auto& gin = tape.grad[static_cast<std::size_t>(op.input)];
        const auto& gout = tape.grad[op_idx];
        const auto& W = params[static_cast<std::size_t>(r.w)].value;
        auto& gW = params[static_cast<std::size_t>(r.w)].grad;
        auto& gB = params[static_cast<std::size_t>(r.b)].grad;
        for (std::size_t n = 0; n < tape.batch; ++n)
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t oc = 0; oc < outC; ++oc) {
                    Real g = gout[(n * len + t) * outC + oc];
                    if (g == Real(0)) continue;
                    gB[oc] += g;
                    for (std::size_t k = 0; k < K; ++k) {
                        std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
                        if (p < 0 || p >= static_cast<std::ptrdiff_t>(len)) continue;
                        const Real* xin = &in[(n * len + static_cast<std::size_t>(p)) * inC];
                        Real* gxin = &gin[(n * len + static_cast<std::size_t>(p)) * inC];
                        const Real* w = &W[(oc * K + k) * inC];
                        Real* gw = &gW[(oc * K + k) * inC];
                        for (std::size_t ic = 0; ic < inC; ++ic) {
                            gw[ic] += g * xin[ic];
                            gxin[ic] += g * w[ic];
                        }
                    }
                }
    }

    void forward_bn(std::size_t op_idx, const LayerSpec& op, const OpRuntime& r,
                    const std::vector<Real>& in, std::vector<Real>& out, std::size_t batch,
                    bool training, bool update_running, Tape<Real>& tape) {
        std::size_t C = r.channels, len = r.len;
        std::size_t count = batch * len;
        const auto& gamma = params[static_cast<std::size_t>(r.gamma)].value;
        const auto& beta = params[static_cast<std::size_t>(r.beta)].value;
        auto& mu = tape.bn_mu[op_idx];
        auto& istd = tape.bn_istd[op_idx];
        auto& xhat = tape.bn_xhat[op_idx];
        mu.assign(C, 0.0);
        istd.assign(C, 0.0);
        xhat.assign(in.size(), Real(0));
        if (training) {
            std::vector<double> var(C, 0.0);
            for (std::size_t nt = 0; nt < count; ++nt)
                for (std::size_t c = 0; c < C; ++c) mu[c] += in[nt * C + c];
            for (std::size_t c = 0; c < C; ++c) mu[c] /= static_cast<double>(count);
            for (std::size_t nt = 0; nt < count; ++nt)
                for (std::size_t c = 0; c < C; ++c) {
                    double d = in[nt * C + c] - mu[c];
                    var[c] += d * d;
                }
            for (std::size_t c = 0; c < C; ++c) {
                var[c] /= static_cast<double>(count);  // biased, as used for normalization
                istd[c] = 1.0 / std::sqrt(var[c] + kBnEps);
            }
            if (update_running) {
                for (std::size_t c = 0; c < C; ++c) {
                    run_mean[op_idx][c] = kBnMomentum * run_mean[op_idx][c] + (1.0 - kBnMomentum) * mu[c];
                    run_var[op_idx][c] = kBnMomentum * run_var[op_idx][c] + (1.0 - kBnMomentum) * var[c];
                }
            }
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                mu[c] = run_mean[op_idx][c];
                istd[c] = 1.0 / std::sqrt(run_var[op_idx][c] + kBnEps);
            }
        }
        for (std::size_t nt = 0; nt < count; ++nt)
            for (std::size_t c = 0; c < C; ++c) {
                Real xh = static_cast<Real>((in[nt * C + c] - mu[c]) * istd[c]);
                xhat[nt * C + c] = xh;
                out[nt * C + c] = gamma[c] * xh + beta[c];
            }
    }

    void backward_bn(const LayerSpec& op, const OpRuntime& r, Tape<Real>& tape, std::size_t op_idx) {
        std::size_t C = r.channels, count = tape.batch * r.len;
        const auto& gout = tape.grad[op_idx];
        auto& gin = tape.grad[static_cast<std::size_t>(op.input)];
        const auto& gamma = params[static_cast<std::size_t>(r.gamma)].value;
        auto& ggamma = params[static_cast<std::size_t>(r.gamma)].grad;
        auto& gbeta = params[static_cast<std::size_t>(r.beta)].grad;
        const auto& xhat = tape.bn_xhat[op_idx];
        const auto& istd = tape.bn_istd[op_idx];
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t nt = 0; nt < count; ++nt)
            for (std::size_t c = 0; c < C; ++c) {
                double g = gout[nt * C + c];
                sum_dy[c] += g;
                sum_dy_xhat[c] += g * xhat[nt * C + c];
            }
        for (std::size_t c = 0; c < C; ++c) {
            ggamma[c] += static_cast<Real>(sum_dy_xhat[c]);
            gbeta[c] += static_cast<Real>(sum_dy[c]);
        }
        double inv_count = 1.0 / static_cast<double>(count);
        for (std::size_t nt = 0; nt < count; ++nt)
            for (std::size_t c = 0; c < C; ++c) {
                double g = gout[nt * C + c];
                double dx = static_cast<double>(gamma[c]) * istd[c] *
                            (g - sum_dy[c] * inv_count - xhat[nt * C + c] * sum_dy_xhat[c] * inv_count);
                gin[nt * C + c] += static_cast<Real>(dx);
            }
    }
};

// ----------------------------------------------------------------------------
// Training.

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch = 64;
    double rho = 0.95;  // Adadelta decay
    double eps = 1e-6;  // Adadelta conditioning
    std::uint64_t seed = 0;
    bool standardize = true;
};

struct TrainedNetwork {
    Network<float> net;
    std::vector<double> epoch_loss;
    std::uint64_t seed = 0;
    bool standardized = false;
    std::vector<double> std_mean, std_stdev;
    std::string catalog_digest;

    explicit TrainedNetwork(Network<float> n) : net(std::move(n)) {}
};

inline TrainedNetwork train(const NetworkSpec& spec, const WindowedTensor& data, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (cfg.batch < 1) throw ValidationError("train: batch size must be >= 1");
    if (data.h != spec.h || data.m != spec.m)
        throw ValidationError("train: data shape (h=" + std::to_string(data.h) + ", M=" +
                              std::to_string(data.m) + ") does not match network (h=" +
                              std::to_string(spec.h) + ", M=" + std::to_string(spec.m) + ")");
    bool pos = false, neg = false;
    for (auto l : data.labels) (l ? pos : neg) = true;
    if (!pos || !neg) throw ValidationError("train: training labels contain a single class");

    WindowedTensor work = data;
    TrainedNetwork trained(Network<float>(spec, derive_seed(cfg.seed, "init")));
    trained.seed = cfg.seed;
    trained.catalog_digest = data.catalog_digest;
    if (cfg.standardize) {
        Standardizer st = Standardizer::fit(data);
        work = st.transform(data);
        trained.standardized = true;
        trained.std_mean = st.mean;
        trained.std_stdev = st.stdev;
    }

    Tape<float> tape;
    std::size_t stride = work.h * work.m;
    std::vector<float> batch_buf;
    std::vector<std::uint8_t> batch_labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = make_rng(cfg.seed, "epoch", epoch);
        auto order = random_permutation(work.n, shuffle_rng);
        double epoch_sum = 0;
        std::size_t batch_index = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch, ++batch_index) {
            std::size_t bs = std::min(cfg.batch, order.size() - at);
            batch_buf.resize(bs * stride);
            batch_labels.resize(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                std::copy(work.values.begin() + static_cast<std::ptrdiff_t>(order[at + i] * stride),
                          work.values.begin() + static_cast<std::ptrdiff_t>((order[at + i] + 1) * stride),
                          batch_buf.begin() + static_cast<std::ptrdiff_t>(i * stride));
                batch_labels[i] = work.labels[order[at + i]];
            }
            trained.net.forward(batch_buf.data(), bs, /*training=*/true, /*update_running=*/true, tape);
            double loss = trained.net.backward(tape, batch_labels);
            if (!std::isfinite(loss))
                throw PipelineError("train: loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batch_index + 1));
            trained.net.adadelta_step(cfg.rho, cfg.eps);
            epoch_sum += loss * static_cast<double>(bs);
        }
        trained.epoch_loss.push_back(epoch_sum / static_cast<double>(work.n));
        if ((epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs)
            log_info(spec.name + ": epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
                     " loss " + std::to_string(trained.epoch_loss.back()));
    }
    return trained;
}

inline std::vector<double> predict_scores(const TrainedNetwork& model, const WindowedTensor& data) {
    const NetworkSpec& spec = model.net.spec;
    if (data.h != spec.h || data.m != spec.m)
        throw ValidationError("predict_scores: data shape (h=" + std::to_string(data.h) + ", M=" +
                              std::to_string(data.m) + ") does not match network (h=" +
                              std::to_string(spec.h) + ", M=" + std::to_string(spec.m) + ")");
    WindowedTensor work = data;
    if (model.standardized) {
        Standardizer st;
        st.mean = model.std_mean;
        st.stdev = model.std_stdev;
        work = st.transform(data);
    }
    // Inference uses frozen running statistics, so every sample is scored
    // independently and the batch partition cannot change the result.
    std::vector<double> scores(work.n, 0.0);
    Tape<float> tape;
    std::size_t stride = work.h * work.m;
    const std::size_t kChunk = 64;
    std::vector<float> buf;
    // The running statistics are read, not written, during inference.
    auto& net = const_cast<Network<float>&>(model.net);
    for (std::size_t at = 0; at < work.n; at += kChunk) {
        std::size_t bs = std::min(kChunk, work.n - at);
        buf.assign(work.values.begin() + static_cast<std::ptrdiff_t>(at * stride),
                   work.values.begin() + static_cast<std::ptrdiff_t>((at + bs) * stride));
        net.forward(buf.data(), bs, /*training=*/false, /*update_running=*/false, tape);
        const auto& logits = tape.act.back();
        for (std::size_t i = 0; i < bs; ++i) {
            double z0 = logits[i * 2], z1 = logits[i * 2 + 1];
            double mx = std::max(z0, z1);
            double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
            scores[at + i] = e1 / (e0 + e1);
        }
    }
    return scores;
}

// ----------------------------------------------------------------------------
// Finite-difference gradient verification (double precision).

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t entries_checked = 0;
};

inline GradCheckResult gradient_check(const NetworkSpec& spec, const std::vector<double>& input,
                                      const std::vector<std::uint8_t>& labels, std::size_t batch,
                                      std::uint64_t seed, std::size_t entries_per_tensor = 16) {
    if (input.size() != batch * spec.h * spec.m)
        throw ValidationError("gradient_check: input size does not match batch * h * M");
    Network<double> net(spec, derive_seed(seed, "init"));
    Tape<double> tape;
    net.forward(input.data(), batch, /*training=*/true, /*update_running=*/false, tape);
    net.backward(tape, labels);
    std::vector<std::vector<double>> analytic;
    for (const auto& p : net.params) analytic.push_back(p.grad);

    const double delta = 1e-5;
    GradCheckResult result;
    Rng rng = make_rng(seed, "gradcheck");
    for (std::size_t pi = 0; pi < net.params.size(); ++pi) {
        auto& value = net.params[pi].value;
        std::vector<std::size_t> entries;
        if (value.size() <= entries_per_tensor) {
            entries.resize(value.size());
            std::iota(entries.begin(), entries.end(), std::size_t{0});
        } else {
            entries = sample_without_replacement(value.size(), entries_per_tensor, rng);
        }
        for (std::size_t e : entries) {
            double keep = value[e];
            value[e] = keep + delta;
            net.forward(input.data(), batch, true, false, tape);
            double lp = net.loss_from_tape(tape, labels);
            value[e] = keep - delta;
            net.forward(input.data(), batch, true, false, tape);
            double lm = net.loss_from_tape(tape, labels);
            value[e] = keep;
            double numeric = (lp - lm) / (2.0 * delta);
            double a = analytic[pi][e];
            double rel = std::fabs(a - numeric) / std::max(1e-6, std::fabs(a) + std::fabs(numeric));
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.entries_checked;
        }
    }
    return result;
}

// ----------------------------------------------------------------------------
// Serialization.

inline nlohmann::json network_to_json(const TrainedNetwork& model) {
    const auto& net = model.net;
    nlohmann::json j;
    j["format"] = "faultrank.model.v1";
    j["kind"] = net.spec.name;
    j["h"] = net.spec.h;
    j["m"] = net.spec.m;
    j["seed"] = model.seed;
    j["catalog_digest"] = model.catalog_digest;
    j["meta"] = net.spec.meta;
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& op : net.spec.ops)
        ops.push_back({{"kind", to_string(op.kind)},
                       {"input", op.input},
                       {"input2", op.input2},
                       {"in_channels", op.in_channels},
                       {"out_channels", op.out_channels},
                       {"kernel", op.kernel}});
    j["ops"] = std::move(ops);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : net.params)
        params.push_back({{"value", p.value}, {"acc_g", p.acc_g}, {"acc_dx", p.acc_dx}});
    j["params"] = std::move(params);
    nlohmann::json running = nlohmann::json::array();
    for (std::size_t i = 0; i < net.run_mean.size(); ++i)
        if (!net.run_mean[i].empty())
            running.push_back({{"op", i}, {"mean", net.run_mean[i]}, {"var", net.run_var[i]}});
    j["running_stats"] = std::move(running);
    j["epoch_loss"] = model.epoch_loss;
    j["standardized"] = model.standardized;
    j["std_mean"] = model.std_mean;
    j["std_stdev"] = model.std_stdev;
    return j;
}

inline TrainedNetwork network_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "faultrank.model.v1")
        throw SchemaError("not a faultrank model file (format tag mismatch)");
    NetworkSpec spec;
    spec.h = j.at("h").get<std::size_t>();
    spec.m = j.at("m").get<std::size_t>();
    spec.name = j.at("kind").get<std::string>();
    spec.meta = j.value("meta", nlohmann::json::object());
    for (const auto& op : j.at("ops")) {
        LayerSpec ls;
        ls.kind = op_kind_from_string(op.at("kind").get<std::string>());
        ls.input = op.at("input").get<int>();
        ls.input2 = op.at("input2").get<int>();
        ls.in_channels = op.at("in_channels").get<std::size_t>();
        ls.out_channels = op.at("out_channels").get<std::size_t>();
        ls.kernel = op.at("kernel").get<std::size_t>();
        spec.ops.push_back(ls);
    }
    TrainedNetwork model(Network<float>(spec, 0));
    const auto& params = j.at("params");
    if (params.size() != model.net.params.size())
        throw SchemaError("model file parameter tensors do not match the network spec");
    for (std::size_t i = 0; i < model.net.params.size(); ++i) {
        auto& p = model.net.params[i];
        p.value = params[i].at("value").get<std::vector<float>>();
        p.acc_g = params[i].at("acc_g").get<std::vector<float>>();
        p.acc_dx = params[i].at("acc_dx").get<std::vector<float>>();
        if (p.value.size() != p.grad.size())
            throw SchemaError("model file parameter tensor size mismatch");
    }
    for (const auto& rs : j.at("running_stats")) {
        std::size_t op = rs.at("op").get<std::size_t>();
        if (op >= model.net.run_mean.size() || model.net.run_mean[op].empty())
            throw SchemaError("model file running statistics reference a non-batchnorm op");
        model.net.run_mean[op] = rs.at("mean").get<std::vector<double>>();
        model.net.run_var[op] = rs.at("var").get<std::vector<double>>();
    }
    model.epoch_loss = j.value("epoch_loss", std::vector<double>{});
    model.seed = j.value("seed", std::uint64_t{0});
    model.catalog_digest = j.value("catalog_digest", "");
    model.standardized = j.value("standardized", false);
    model.std_mean = j.value("std_mean", std::vector<double>{});
    model.std_stdev = j.value("std_stdev", std::vector<double>{});
    return model;
}

}  // namespace faultrank
