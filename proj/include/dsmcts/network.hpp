#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsmcts/tensor.hpp"
#include "dsmcts/util.hpp"

namespace dsmcts {

inline constexpr double kProbFloor = 1e-12;
inline constexpr int kStateChannels = 4;
inline constexpr int kMctsChannels = 7;

struct NetConfig {
    int board_size = 5;
    int mcts_channels = 0;  // 0 for PV/State-UN inputs, 7 for MCTS-UN
    int blocks = 2;
    int filters = 32;
    int head_hidden = 32;
    double c1 = 0.1;    // weight of the value/policy terms
    double c2 = 1e-4;   // L2 weight decay

    int input_channels() const { return kStateChannels + mcts_channels; }
    int cells() const { return board_size * board_size; }
    bool uses_mcts_features() const { return mcts_channels > 0; }

    bool operator==(const NetConfig&) const = default;
};

/// Which input feature group a training sample keeps. kBoth keeps everything;
/// the other two zero out the complementary group. Only meaningful for
/// networks that take MCTS features.
enum class FeatureDrop : uint8_t { kBoth = 0, kStateOnly = 1, kMctsOnly = 2 };

struct Sample {
    std::vector<double> state_feat;  // kStateChannels * cells
    std::vector<double> mcts_feat;   // kMctsChannels * cells, empty for state-only nets
    double u_target = 0.0;           // [0,1]
    std::vector<double> pi_target;   // cells, sums to 1
    double z_target = 0.0;           // -1 or 1
    FeatureDrop drop = FeatureDrop::kBoth;
};

struct NetOutput {
    double u = 0.0;
    double v = 0.0;
    std::vector<double> p;  // softmax over cells
};

namespace nn {

// Widest supported patch row: 9x9 board, padded to a multiple of 8 doubles.
inline constexpr int kMaxPlanePad = 88;

/**
 * Expands the input into patch rows so the 3x3 convolution becomes one
 * matrix product with a contiguous inner loop over board cells. Row t of
 * `patches` holds input channel t/9 shifted by kernel offset t%9 (zeros
 * where the shift leaves the board); rows are padded to `stride`.
 */
inline void im2col3(const double* in, int cin, int s, double* patches, int stride) {
    int plane = s * s;
    for (int ci = 0; ci < cin; ++ci) {
        const double* x = in + ci * plane;
        for (int dy = 0; dy < 3; ++dy) {
            int oy0 = std::max(0, 1 - dy), oy1 = std::min(s, s + 1 - dy);
            for (int dx = 0; dx < 3; ++dx) {
                double* row = patches + (static_cast<size_t>(ci) * 9 + dy * 3 + dx) * stride;
                std::fill(row, row + stride, 0.0);
                int ox0 = std::max(0, 1 - dx), ox1 = std::min(s, s + 1 - dx);
                for (int oy = oy0; oy < oy1; ++oy) {
                    const double* xr = x + (oy + dy - 1) * s + (ox0 + dx - 1);
                    double* orow = row + oy * s + ox0;
                    for (int i = 0; i < ox1 - ox0; ++i) orow[i] = xr[i];
                }
            }
        }
    }
}

namespace detail_gemm {

/**
 * out[co] = b[co] + sum_t w[co][t] * patches[t], with patch rows padded to a
 * compile-time width so the accumulators stay in vector registers. Two
 * output channels per pass for instruction-level parallelism.
 */
template <int W>
inline void run(const double* __restrict w, const double* __restrict b,
                const double* __restrict patches, int rows, double* __restrict out, int cout,
                int plane) {
    int co = 0;
    for (; co + 1 < cout; co += 2) {
        double acc0[W], acc1[W];
        for (int i = 0; i < W; ++i) {
            acc0[i] = b[co];
            acc1[i] = b[co + 1];
        }
        const double* w0 = w + static_cast<size_t>(co) * rows;
        const double* w1 = w0 + rows;
        const double* p = patches;
        for (int t = 0; t < rows; ++t, p += W) {
            double wv0 = w0[t], wv1 = w1[t];
            for (int i = 0; i < W; ++i) {
                acc0[i] += wv0 * p[i];
                acc1[i] += wv1 * p[i];
            }
        }
        std::copy(acc0, acc0 + plane, out + static_cast<size_t>(co) * plane);
        std::copy(acc1, acc1 + plane, out + static_cast<size_t>(co + 1) * plane);
    }
    if (co < cout) {
        double acc[W];
        for (int i = 0; i < W; ++i) acc[i] = b[co];
        const double* w0 = w + static_cast<size_t>(co) * rows;
        const double* p = patches;
        for (int t = 0; t < rows; ++t, p += W) {
            double wv = w0[t];
            for (int i = 0; i < W; ++i) acc[i] += wv * p[i];
        }
        std::copy(acc, acc + plane, out + static_cast<size_t>(co) * plane);
    }
}

}  // namespace detail_gemm

inline void conv2d(const double* in, int cin, const double* w, const double* b, double* out,
                   int cout, int s, int k) {
    int plane = s * s;
    if (k == 1) {
        for (int co = 0; co < cout; ++co) {
            double* o = out + co * plane;
            double bv = b[co];
            for (int i = 0; i < plane; ++i) o[i] = bv;
            const double* wr = w + static_cast<size_t>(co) * cin;
            for (int ci = 0; ci < cin; ++ci) {
                const double* x = in + ci * plane;
                double wv = wr[ci];
                for (int i = 0; i < plane; ++i) o[i] += wv * x[i];
            }
        }
        return;
    }
    if (k != 3) throw std::invalid_argument("unsupported kernel size");
    int stride = (plane + 7) & ~7;
    thread_local std::vector<double> patches;
    patches.resize(static_cast<size_t>(cin) * 9 * stride);
    im2col3(in, cin, s, patches.data(), stride);
    int rows = cin * 9;
    switch (stride) {
        case 8: detail_gemm::run<8>(w, b, patches.data(), rows, out, cout, plane); break;
        case 16: detail_gemm::run<16>(w, b, patches.data(), rows, out, cout, plane); break;
        case 32: detail_gemm::run<32>(w, b, patches.data(), rows, out, cout, plane); break;
        case 40: detail_gemm::run<40>(w, b, patches.data(), rows, out, cout, plane); break;
        case 56: detail_gemm::run<56>(w, b, patches.data(), rows, out, cout, plane); break;
        case 64: detail_gemm::run<64>(w, b, patches.data(), rows, out, cout, plane); break;
        case 88: detail_gemm::run<88>(w, b, patches.data(), rows, out, cout, plane); break;
        default: throw std::logic_error("unexpected plane stride");
    }
}

/** Accumulates conv gradients; din may be null when the input gradient is not needed. */
inline void conv2d_backward(const double* in, int cin, const double* w, const double* dout,
                            int cout, int s, int k, double* din, double* dw, double* db) {
    int pad = k / 2;
    int plane = s * s;
    for (int co = 0; co < cout; ++co) {
        const double* go = dout + co * plane;
        double acc = 0.0;
        for (int i = 0; i < plane; ++i) acc += go[i];
        db[co] += acc;
    }
    for (int co = 0; co < cout; ++co) {
        const double* go = dout + co * plane;
        for (int ci = 0; ci < cin; ++ci) {
            const double* x = in + ci * plane;
            double* gx = din ? din + ci * plane : nullptr;
            const double* wk = w + (static_cast<size_t>(co) * cin + ci) * k * k;
            double* gwk = dw + (static_cast<size_t>(co) * cin + ci) * k * k;
            for (int dy = 0; dy < k; ++dy) {
                int oy0 = std::max(0, pad - dy), oy1 = std::min(s, s + pad - dy);
                for (int dx = 0; dx < k; ++dx) {
                    int ox0 = std::max(0, pad - dx), ox1 = std::min(s, s + pad - dx);
                    double wv = wk[dy * k + dx];
                    double gw = 0.0;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const double* xr = x + (oy + dy - pad) * s + (ox0 + dx - pad);
                        const double* gr = go + oy * s + ox0;
                        int width = ox1 - ox0;
                        for (int i = 0; i < width; ++i) gw += xr[i] * gr[i];
                        if (gx) {
                            double* gxr = gx + (oy + dy - pad) * s + (ox0 + dx - pad);
                            for (int i = 0; i < width; ++i) gxr[i] += wv * gr[i];
                        }
                    }
                    gwk[dy * k + dx] += gw;
                }
            }
        }
    }
}

inline void dense(const double* in, int n, const double* w, const double* b, double* out, int m) {
    for (int i = 0; i < m; ++i) {
        const double* wr = w + static_cast<size_t>(i) * n;
        double acc = b[i];
        for (int j = 0; j < n; ++j) acc += wr[j] * in[j];
        out[i] = acc;
    }
}

inline void dense_backward(const double* in, int n, const double* w, const double* dout, int m,
                           double* din, double* dw, double* db) {
    for (int i = 0; i < m; ++i) {
        double g = dout[i];
        db[i] += g;
        const double* wr = w + static_cast<size_t>(i) * n;
        double* gwr = dw + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            gwr[j] += g * in[j];
            if (din) din[j] += g * wr[j];
        }
    }
}

inline void relu(const double* in, double* out, int n) {
    for (int i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

/** din += dout gated by the sign of the pre-activation. */
inline void relu_backward(const double* pre, const double* dout, double* din, int n) {
    for (int i = 0; i < n; ++i) din[i] += pre[i] > 0.0 ? dout[i] : 0.0;
}

inline void softmax(const double* logits, double* out, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace nn

/**
 * Three-headed convolutional network over board planes: uncertainty u
 * (logistic), move policy p (softmax over board points), and value v (tanh).
 *
 * Body: 3x3 stem convolution, then `blocks` residual blocks of two 3x3
 * convolutions each, all zero-padded with ReLU. Heads reduce with a 1x1
 * convolution, then dense layers. Parameters live in one flat f64 vector;
 * gradients are computed by a hand-written backward pass.
 *
 * forward() is const and takes an external scratch buffer, so a frozen
 * network can be shared across threads.
 */
class Network {
public:
    struct LayerInfo {
        std::string name;
        std::vector<int> shape;
        size_t offset = 0;
        size_t size = 0;
    };

    struct Workspace {
        std::vector<double> input;
        std::vector<double> stem_pre, stem_act;
        // Per block: pre1, act1, pre2 (before skip), act2 (block output).
        std::vector<std::vector<double>> pre1, act1, pre2, act2;
        std::vector<double> phead_pre, phead_act, logits, p;
        std::vector<double> vhead_pre, vhead_act, vh_pre, vh_act;
        std::vector<double> uhead_pre, uhead_act, uh_pre, uh_act;
        double v_pre = 0, u_pre = 0, v = 0, u = 0;
        // Backward scratch.
        std::vector<double> d_body, d_body2, d_head, d_hidden;
    };

    explicit Network(NetConfig cfg) : cfg_(cfg) {
        if (cfg.board_size < 1 || cfg.board_size > 9) throw std::invalid_argument("bad board size");
        if (cfg.mcts_channels != 0 && cfg.mcts_channels != kMctsChannels)
            throw std::invalid_argument("mcts_channels must be 0 or 7");
        if (cfg.blocks < 0 || cfg.filters < 1 || cfg.head_hidden < 1)
            throw std::invalid_argument("bad architecture");
        build_layout();
        params_.assign(total_params_, 0.0);
    }

    const NetConfig& config() const { return cfg_; }
    size_t num_params() const { return total_params_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<LayerInfo>& layers() const { return layers_; }

    /// He-style init for hidden layers, small-scale init for head outputs.
    void init_weights(uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (const auto& l : layers_) {
            double* w = params_.data() + l.offset;
            bool is_bias = l.shape.size() == 1;
            if (is_bias) {
                std::fill(w, w + l.size, 0.0);
                continue;
            }
            size_t fan_in = 1;
            for (size_t d = 1; d < l.shape.size(); ++d) fan_in *= static_cast<size_t>(l.shape[d]);
            double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
            if (l.name == "policy.dense.w" || l.name == "value.out.w" || l.name == "unc.out.w")
                scale = 0.01;
            for (size_t i = 0; i < l.size; ++i) w[i] = scale * normal(rng);
        }
    }

    Workspace make_workspace() const {
        Workspace ws;
        int plane = cfg_.cells();
        int body = cfg_.filters * plane;
        ws.input.assign(static_cast<size_t>(cfg_.input_channels()) * plane, 0.0);
        ws.stem_pre.assign(body, 0.0);
        ws.stem_act.assign(body, 0.0);
        ws.pre1.assign(cfg_.blocks, std::vector<double>(body, 0.0));
        ws.act1 = ws.pre1;
        ws.pre2 = ws.pre1;
        ws.act2 = ws.pre1;
        ws.phead_pre.assign(2 * plane, 0.0);
        ws.phead_act.assign(2 * plane, 0.0);
        ws.logits.assign(plane, 0.0);
        ws.p.assign(plane, 0.0);
        ws.vhead_pre.assign(plane, 0.0);
        ws.vhead_act.assign(plane, 0.0);
        ws.vh_pre.assign(cfg_.head_hidden, 0.0);
        ws.vh_act.assign(cfg_.head_hidden, 0.0);
        ws.uhead_pre = ws.vhead_pre;
        ws.uhead_act = ws.vhead_act;
        ws.uh_pre = ws.vh_pre;
        ws.uh_act = ws.vh_act;
        ws.d_body.assign(body, 0.0);
        ws.d_body2.assign(body, 0.0);
        ws.d_head.assign(std::max(2 * plane, body), 0.0);
        ws.d_hidden.assign(std::max(cfg_.head_hidden, plane), 0.0);
        return ws;
    }

    /**
     * Runs the forward pass. mcts_feat must be non-null exactly when the
     * network was configured with MCTS input channels; drop controls which
     * feature group is zeroed before the stem.
     */
    NetOutput forward(const double* state_feat, const double* mcts_feat, Workspace& ws,
                      FeatureDrop drop = FeatureDrop::kBoth) const {
        assemble_input(state_feat, mcts_feat, drop, ws.input.data());
        run_forward(ws);
        NetOutput out;
        out.u = ws.u;
        out.v = ws.v;
        out.p = ws.p;
        return out;
    }

    NetOutput forward(const Sample& sample, Workspace& ws) const {
        return forward(sample.state_feat.data(),
                       sample.mcts_feat.empty() ? nullptr : sample.mcts_feat.data(), ws,
                       sample.drop);
    }

    /** Mean three-term loss over the batch plus the L2 penalty. */
    double loss(const std::vector<Sample>& batch, Workspace& ws) const {
        if (batch.empty()) throw std::invalid_argument("empty batch");
        double total = 0.0;
        for (const auto& s : batch) {
            validate_sample(s);
            forward(s, ws);
            total += sample_data_loss(s, ws);
        }
        return total / static_cast<double>(batch.size()) + cfg_.c2 * squared_norm();
    }

    /**
     * Full-batch gradient of loss() with respect to every parameter,
     * including the weight-decay term. grad is overwritten; returns the
     * batch loss from the same forward passes.
     */
    double gradient(const std::vector<Sample>& batch, Workspace& ws,
                    std::vector<double>& grad) const {
        if (batch.empty()) throw std::invalid_argument("empty batch");
        grad.assign(total_params_, 0.0);
        double total = 0.0;
        for (const auto& s : batch) {
            validate_sample(s);
            forward(s, ws);
            total += sample_data_loss(s, ws);
            backward_sample(s, ws, grad.data());
        }
        double inv = 1.0 / static_cast<double>(batch.size());
        for (size_t i = 0; i < total_params_; ++i)
            grad[i] = grad[i] * inv + 2.0 * cfg_.c2 * params_[i];
        return total * inv + cfg_.c2 * squared_norm();
    }

    /// Smallest |pre-activation| across all ReLU inputs for the batch;
    /// finite-difference checks need this bounded away from zero.
    double min_abs_preactivation(const std::vector<Sample>& batch, Workspace& ws) const {
        double best = std::numeric_limits<double>::infinity();
        auto scan = [&best](const std::vector<double>& v) {
            for (double x : v) best = std::min(best, std::abs(x));
        };
        for (const auto& s : batch) {
            forward(s, ws);
            scan(ws.stem_pre);
            for (int b = 0; b < cfg_.blocks; ++b) {
                scan(ws.pre1[b]);
                // The second conv's ReLU acts on pre2 + skip.
                for (size_t i = 0; i < ws.pre2[b].size(); ++i) {
                    double skip = b == 0 ? ws.stem_act[i] : ws.act2[b - 1][i];
                    best = std::min(best, std::abs(ws.pre2[b][i] + skip));
                }
            }
            scan(ws.phead_pre);
            scan(ws.vhead_pre);
            scan(ws.uhead_pre);
            scan(ws.vh_pre);
            scan(ws.uh_pre);
        }
        return best;
    }

    double squared_norm() const {
        double s = 0.0;
        for (double w : params_) s += w * w;
        return s;
    }

    std::vector<std::pair<std::string, Tensor>> export_tensors() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& l : layers_) {
            Tensor t = Tensor::zeros(l.shape);
            std::copy(params_.begin() + static_cast<long>(l.offset),
                      params_.begin() + static_cast<long>(l.offset + l.size), t.data.begin());
            out.emplace_back(l.name, std::move(t));
        }
        return out;
    }

private:
    void add_layer(const std::string& name, std::vector<int> shape) {
        LayerInfo l;
        l.name = name;
        l.shape = std::move(shape);
        l.offset = total_params_;
        l.size = Tensor::numel(l.shape);
        total_params_ += l.size;
        layers_.push_back(std::move(l));
        index_[layers_.back().name] = layers_.size() - 1;
    }

    void build_layout() {
        int f = cfg_.filters, cin = cfg_.input_channels(), s2 = cfg_.cells(), h = cfg_.head_hidden;
        add_layer("stem.w", {f, cin, 3, 3});
        add_layer("stem.b", {f});
        for (int b = 0; b < cfg_.blocks; ++b) {
            std::string p = "block" + std::to_string(b);
            add_layer(p + ".conv1.w", {f, f, 3, 3});
            add_layer(p + ".conv1.b", {f});
            add_layer(p + ".conv2.w", {f, f, 3, 3});
            add_layer(p + ".conv2.b", {f});
        }
        add_layer("policy.conv.w", {2, f, 1, 1});
        add_layer("policy.conv.b", {2});
        add_layer("policy.dense.w", {s2, 2 * s2});
        add_layer("policy.dense.b", {s2});
        add_layer("value.conv.w", {1, f, 1, 1});
        add_layer("value.conv.b", {1});
        add_layer("value.dense.w", {h, s2});
        add_layer("value.dense.b", {h});
        add_layer("value.out.w", {1, h});
        add_layer("value.out.b", {1});
        add_layer("unc.conv.w", {1, f, 1, 1});
        add_layer("unc.conv.b", {1});
        add_layer("unc.dense.w", {h, s2});
        add_layer("unc.dense.b", {h});
        add_layer("unc.out.w", {1, h});
        add_layer("unc.out.b", {1});
    }

    const double* lw(const char* name) const { return params_.data() + at(name).offset; }
    double* gw(const char* name, double* grad) const { return grad + at(name).offset; }
    const LayerInfo& at(const char* name) const { return layers_[index_.at(name)]; }

    void assemble_input(const double* state_feat, const double* mcts_feat, FeatureDrop drop,
                        double* input) const {
        int plane = cfg_.cells();
        size_t n_state = static_cast<size_t>(kStateChannels) * plane;
        if (state_feat == nullptr) throw std::invalid_argument("missing state features");
        if (cfg_.uses_mcts_features() != (mcts_feat != nullptr))
            throw std::invalid_argument("MCTS feature presence does not match network mode");
        if (!cfg_.uses_mcts_features() && drop != FeatureDrop::kBoth)
            throw std::invalid_argument("feature dropout requires MCTS input channels");
        if (drop == FeatureDrop::kMctsOnly) {
            std::fill(input, input + n_state, 0.0);
        } else {
            std::copy(state_feat, state_feat + n_state, input);
        }
        if (cfg_.uses_mcts_features()) {
            size_t n_mcts = static_cast<size_t>(kMctsChannels) * plane;
            if (drop == FeatureDrop::kStateOnly) {
                std::fill(input + n_state, input + n_state + n_mcts, 0.0);
            } else {
                std::copy(mcts_feat, mcts_feat + n_mcts, input + n_state);
            }
        }
    }

    void run_forward(Workspace& ws) const {
        int s = cfg_.board_size, f = cfg_.filters, s2 = cfg_.cells(), h = cfg_.head_hidden;
        int body = f * s2;
        nn::conv2d(ws.input.data(), cfg_.input_channels(), lw("stem.w"), lw("stem.b"),
                   ws.stem_pre.data(), f, s, 3);
        nn::relu(ws.stem_pre.data(), ws.stem_act.data(), body);
        const double* x = ws.stem_act.data();
        for (int b = 0; b < cfg_.blocks; ++b) {
            std::string p = "block" + std::to_string(b);
            nn::conv2d(x, f, lw((p + ".conv1.w").c_str()), lw((p + ".conv1.b").c_str()),
                       ws.pre1[b].data(), f, s, 3);
            nn::relu(ws.pre1[b].data(), ws.act1[b].data(), body);
            nn::conv2d(ws.act1[b].data(), f, lw((p + ".conv2.w").c_str()),
                       lw((p + ".conv2.b").c_str()), ws.pre2[b].data(), f, s, 3);
            for (int i = 0; i < body; ++i) {
                double z = ws.pre2[b][i] + x[i];
                ws.act2[b][i] = z > 0.0 ? z : 0.0;
            }
            x = ws.act2[b].data();
        }
        nn::conv2d(x, f, lw("policy.conv.w"), lw("policy.conv.b"), ws.phead_pre.data(), 2, s, 1);
        nn::relu(ws.phead_pre.data(), ws.phead_act.data(), 2 * s2);
        nn::dense(ws.phead_act.data(), 2 * s2, lw("policy.dense.w"), lw("policy.dense.b"),
                  ws.logits.data(), s2);
        nn::softmax(ws.logits.data(), ws.p.data(), s2);

        nn::conv2d(x, f, lw("value.conv.w"), lw("value.conv.b"), ws.vhead_pre.data(), 1, s, 1);
        nn::relu(ws.vhead_pre.data(), ws.vhead_act.data(), s2);
        nn::dense(ws.vhead_act.data(), s2, lw("value.dense.w"), lw("value.dense.b"),
                  ws.vh_pre.data(), h);
        nn::relu(ws.vh_pre.data(), ws.vh_act.data(), h);
        nn::dense(ws.vh_act.data(), h, lw("value.out.w"), lw("value.out.b"), &ws.v_pre, 1);
        ws.v = std::tanh(ws.v_pre);

        nn::conv2d(x, f, lw("unc.conv.w"), lw("unc.conv.b"), ws.uhead_pre.data(), 1, s, 1);
        nn::relu(ws.uhead_pre.data(), ws.uhead_act.data(), s2);
        nn::dense(ws.uhead_act.data(), s2, lw("unc.dense.w"), lw("unc.dense.b"), ws.uh_pre.data(),
                  h);
        nn::relu(ws.uh_pre.data(), ws.uh_act.data(), h);
        nn::dense(ws.uh_act.data(), h, lw("unc.out.w"), lw("unc.out.b"), &ws.u_pre, 1);
        ws.u = 1.0 / (1.0 + std::exp(-ws.u_pre));
    }

    /** (u-U)^2 + c1*((v-z)^2 - pi^T log p), with the probability floor in the log. */
    double sample_data_loss(const Sample& s, const Workspace& ws) const {
        double lu = (ws.u - s.u_target) * (ws.u - s.u_target);
        double lv = (ws.v - s.z_target) * (ws.v - s.z_target);
        double ce = 0.0;
        for (int i = 0; i < cfg_.cells(); ++i) {
            if (s.pi_target[static_cast<size_t>(i)] == 0.0) continue;
            ce -= s.pi_target[static_cast<size_t>(i)] *
                  std::log(std::max(ws.p[static_cast<size_t>(i)], kProbFloor));
        }
        return lu + cfg_.c1 * (lv + ce);
    }

    void backward_sample(const Sample& s, Workspace& ws, double* grad) const {
        int sz = cfg_.board_size, f = cfg_.filters, s2 = cfg_.cells(), h = cfg_.head_hidden;
        int body = f * s2;
        std::fill(ws.d_body.begin(), ws.d_body.end(), 0.0);

        // Policy head: d(ce)/d(logit_j) with the floor's dead zone respected.
        {
            double active_mass = 0.0;
            for (int i = 0; i < s2; ++i)
                if (ws.p[static_cast<size_t>(i)] > kProbFloor)
                    active_mass += s.pi_target[static_cast<size_t>(i)];
            std::vector<double>& dlogits = ws.d_hidden;
            for (int j = 0; j < s2; ++j) {
                double pi_j = s.pi_target[static_cast<size_t>(j)];
                double indicator = ws.p[static_cast<size_t>(j)] > kProbFloor ? 1.0 : 0.0;
                dlogits[static_cast<size_t>(j)] =
                    cfg_.c1 * (ws.p[static_cast<size_t>(j)] * active_mass - pi_j * indicator);
            }
            std::fill(ws.d_head.begin(), ws.d_head.begin() + 2 * s2, 0.0);
            std::vector<double> dact(static_cast<size_t>(2 * s2), 0.0);
            nn::dense_backward(ws.phead_act.data(), 2 * s2, lw("policy.dense.w"), dlogits.data(),
                               s2, dact.data(), gw("policy.dense.w", grad),
                               gw("policy.dense.b", grad));
            std::fill(ws.d_head.begin(), ws.d_head.begin() + 2 * s2, 0.0);
            nn::relu_backward(ws.phead_pre.data(), dact.data(), ws.d_head.data(), 2 * s2);
            const double* bx = body_output(ws);
            nn::conv2d_backward(bx, f, lw("policy.conv.w"), ws.d_head.data(), 2, sz, 1,
                                ws.d_body.data(), gw("policy.conv.w", grad),
                                gw("policy.conv.b", grad));
        }

        // Value head.
        {
            double dv = cfg_.c1 * 2.0 * (ws.v - s.z_target) * (1.0 - ws.v * ws.v);
            scalar_head_backward(ws, grad, dv, "value", ws.vhead_pre, ws.vhead_act, ws.vh_pre,
                                 ws.vh_act, h, s2, sz, f);
        }
        // Uncertainty head.
        {
            double du = 2.0 * (ws.u - s.u_target) * ws.u * (1.0 - ws.u);
            scalar_head_backward(ws, grad, du, "unc", ws.uhead_pre, ws.uhead_act, ws.uh_pre,
                                 ws.uh_act, h, s2, sz, f);
        }

        // Residual body, last block first. d_body holds dL/d(block output).
        for (int b = cfg_.blocks - 1; b >= 0; --b) {
            std::string p = "block" + std::to_string(b);
            const double* skip = b == 0 ? ws.stem_act.data() : ws.act2[b - 1].data();
            // ReLU over (pre2 + skip).
            for (int i = 0; i < body; ++i)
                ws.d_body2[static_cast<size_t>(i)] =
                    (ws.pre2[b][static_cast<size_t>(i)] + skip[i]) > 0.0
                        ? ws.d_body[static_cast<size_t>(i)]
                        : 0.0;
            // d_body2 flows both into conv2 and directly to the skip input.
            std::vector<double> dact1(static_cast<size_t>(body), 0.0);
            nn::conv2d_backward(ws.act1[b].data(), f, lw((p + ".conv2.w").c_str()),
                                ws.d_body2.data(), f, sz, 3, dact1.data(),
                                gw((p + ".conv2.w").c_str(), grad),
                                gw((p + ".conv2.b").c_str(), grad));
            std::vector<double> dpre1(static_cast<size_t>(body), 0.0);
            nn::relu_backward(ws.pre1[b].data(), dact1.data(), dpre1.data(), body);
            std::copy(ws.d_body2.begin(), ws.d_body2.end(), ws.d_body.begin());
            nn::conv2d_backward(skip, f, lw((p + ".conv1.w").c_str()), dpre1.data(), f, sz, 3,
                                ws.d_body.data(), gw((p + ".conv1.w").c_str(), grad),
                                gw((p + ".conv1.b").c_str(), grad));
        }
        // Stem.
        std::vector<double> dstem(static_cast<size_t>(body), 0.0);
        nn::relu_backward(ws.stem_pre.data(), ws.d_body.data(), dstem.data(), body);
        nn::conv2d_backward(ws.input.data(), cfg_.input_channels(), lw("stem.w"), dstem.data(), f,
                            sz, 3, nullptr, gw("stem.w", grad), gw("stem.b", grad));
    }

    const double* body_output(const Workspace& ws) const {
        return cfg_.blocks == 0 ? ws.stem_act.data() : ws.act2[cfg_.blocks - 1].data();
    }

    void scalar_head_backward(Workspace& ws, double* grad, double dpre_out,
                              const std::string& head, const std::vector<double>& conv_pre,
                              const std::vector<double>& conv_act,
                              const std::vector<double>& h_pre, const std::vector<double>& h_act,
                              int h, int s2, int sz, int f) const {
        std::vector<double> dh(static_cast<size_t>(h), 0.0);
        nn::dense_backward(h_act.data(), h, lw((head + ".out.w").c_str()), &dpre_out, 1, dh.data(),
                           gw((head + ".out.w").c_str(), grad), gw((head + ".out.b").c_str(), grad));
        std::vector<double> dh_pre(static_cast<size_t>(h), 0.0);
        nn::relu_backward(h_pre.data(), dh.data(), dh_pre.data(), h);
        std::vector<double> dconv_act(static_cast<size_t>(s2), 0.0);
        nn::dense_backward(conv_act.data(), s2, lw((head + ".dense.w").c_str()), dh_pre.data(), h,
                           dconv_act.data(), gw((head + ".dense.w").c_str(), grad),
                           gw((head + ".dense.b").c_str(), grad));
        std::vector<double> dconv_pre(static_cast<size_t>(s2), 0.0);
        nn::relu_backward(conv_pre.data(), dconv_act.data(), dconv_pre.data(), s2);
        nn::conv2d_backward(body_output(ws), f, lw((head + ".conv.w").c_str()), dconv_pre.data(),
                            1, sz, 1, ws.d_body.data(), gw((head + ".conv.w").c_str(), grad),
                            gw((head + ".conv.b").c_str(), grad));
    }

    void validate_sample(const Sample& s) const {
        size_t plane = static_cast<size_t>(cfg_.cells());
        if (s.state_feat.size() != static_cast<size_t>(kStateChannels) * plane)
            throw std::invalid_argument("bad state feature size");
        if (cfg_.uses_mcts_features() &&
            s.mcts_feat.size() != static_cast<size_t>(kMctsChannels) * plane)
            throw std::invalid_argument("bad MCTS feature size");
        if (s.pi_target.size() != plane) throw std::invalid_argument("bad policy target size");
        if (s.u_target < 0.0 || s.u_target > 1.0)
            throw std::invalid_argument("U target outside [0,1]");
        if (s.z_target != 1.0 && s.z_target != -1.0)
            throw std::invalid_argument("z target must be -1 or 1");
        double sum = 0.0;
        for (double x : s.pi_target) sum += x;
        if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("policy target must sum to 1");
    }

    NetConfig cfg_;
    std::vector<LayerInfo> layers_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<double> params_;
    size_t total_params_ = 0;
};

/** SGD with classical momentum; skips (and reports) steps with non-finite gradients. */
class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

    struct StepResult {
        double loss = 0.0;
        bool applied = false;
    };

    StepResult step(Network& net, const std::vector<Sample>& batch, double lr,
                    Network::Workspace& ws) {
        if (lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
        if (velocity_.size() != net.num_params()) velocity_.assign(net.num_params(), 0.0);
        StepResult r;
        if (lr == 0.0) {
            r.loss = net.loss(batch, ws);
            r.applied = true;
            return r;
        }
        r.loss = net.gradient(batch, ws, grad_);
        for (double g : grad_) {
            if (!std::isfinite(g)) return r;
        }
        auto& p = net.params();
        for (size_t i = 0; i < p.size(); ++i) {
            velocity_[i] = momentum_ * velocity_[i] - lr * grad_[i];
            p[i] += velocity_[i];
        }
        r.applied = true;
        return r;
    }

    void reset() { velocity_.clear(); }

private:
    double momentum_;
    std::vector<double> velocity_;
    std::vector<double> grad_;
};

/**
 * Compares the analytic gradient with central finite differences on
 * `coords` randomly chosen parameters and returns the maximum relative
 * error. The batch should be checked with min_abs_preactivation first if
 * exact agreement matters.
 */
inline double gradient_check(Network& net, const std::vector<Sample>& batch, uint64_t seed,
                             size_t coords = 100) {
    Network::Workspace ws = net.make_workspace();
    std::vector<double> grad;
    net.gradient(batch, ws, grad);
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    auto& p = net.params();
    for (size_t c = 0; c < coords; ++c) {
        size_t i = rng() % p.size();
        double orig = p[i];
        double h = 1e-6 * std::max(1.0, std::abs(orig));
        p[i] = orig + h;
        double lp = net.loss(batch, ws);
        p[i] = orig - h;
        double lm = net.loss(batch, ws);
        p[i] = orig;
        double fd = (lp - lm) / (2.0 * h);
        double rel = std::abs(fd - grad[i]) / std::max({1.0, std::abs(fd), std::abs(grad[i])});
        worst = std::max(worst, rel);
    }
    return worst;
}

inline constexpr char kNetMagic[] = "DSMCTS-NET";

inline void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write network file: " + path);
    out.write(kNetMagic, sizeof(kNetMagic) - 1);
    const NetConfig& c = net.config();
    write_raw<uint32_t>(out, 1);  // format version
    write_raw<uint32_t>(out, static_cast<uint32_t>(c.board_size));
    write_raw<uint32_t>(out, static_cast<uint32_t>(kStateChannels));
    write_raw<uint32_t>(out, static_cast<uint32_t>(c.mcts_channels));
    write_raw<uint32_t>(out, static_cast<uint32_t>(c.blocks));
    write_raw<uint32_t>(out, static_cast<uint32_t>(c.filters));
    write_raw<uint32_t>(out, static_cast<uint32_t>(c.head_hidden));
    write_raw<double>(out, c.c1);
    write_raw<double>(out, c.c2);
    write_raw<uint64_t>(out, net.num_params());
    for (double w : net.params()) write_raw<double>(out, w);
    if (!out) throw std::runtime_error("short write: " + path);
}

inline Network load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read network file: " + path);
    char magic[sizeof(kNetMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, sizeof(magic)) != kNetMagic)
        throw std::runtime_error("bad network file magic: " + path);
    auto version = read_raw<uint32_t>(in);
    if (version != 1) throw std::runtime_error("unsupported network format version");
    NetConfig c;
    c.board_size = static_cast<int>(read_raw<uint32_t>(in));
    auto state_ch = read_raw<uint32_t>(in);
    if (state_ch != kStateChannels) throw std::runtime_error("unsupported state channel count");
    c.mcts_channels = static_cast<int>(read_raw<uint32_t>(in));
    c.blocks = static_cast<int>(read_raw<uint32_t>(in));
    c.filters = static_cast<int>(read_raw<uint32_t>(in));
    c.head_hidden = static_cast<int>(read_raw<uint32_t>(in));
    c.c1 = read_raw<double>(in);
    c.c2 = read_raw<double>(in);
    auto count = read_raw<uint64_t>(in);
    Network net(c);
    if (count != net.num_params()) throw std::runtime_error("network parameter count mismatch");
    for (auto& w : net.params()) {
        w = read_raw<double>(in);
        if (!std::isfinite(w)) throw std::runtime_error("non-finite weight in network file");
    }
    return net;
}

}  // namespace dsmcts
