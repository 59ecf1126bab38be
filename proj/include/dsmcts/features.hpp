#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dsmcts/mcts.hpp"
#include "dsmcts/network.hpp"
#include "dsmcts/nogo.hpp"
#include "dsmcts/tensor.hpp"

namespace dsmcts {

/**
 * Board encoding from the perspective of the player to move:
 * plane 0 own stones, plane 1 opponent stones, plane 2 legal-move mask,
 * plane 3 all ones. NoGo positions are Markov (no ko), so no history planes.
 */
inline Tensor state_features(const GameState& state) {
    int sz = state.size();
    Tensor t = Tensor::zeros({kStateChannels, sz, sz});
    size_t plane = static_cast<size_t>(state.num_cells());
    Cell own = player_cell(state.to_move());
    Cell opp = player_cell(opponent(state.to_move()));
    for (int r = 0; r < sz; ++r) {
        for (int c = 0; c < sz; ++c) {
            size_t idx = static_cast<size_t>(r * sz + c);
            Cell cell = state.cell(r, c);
            if (cell == own) t.data[idx] = 1.0;
            if (cell == opp) t.data[plane + idx] = 1.0;
            if (state.is_legal({static_cast<int8_t>(r), static_cast<int8_t>(c)}))
                t.data[2 * plane + idx] = 1.0;
            t.data[3 * plane + idx] = 1.0;
        }
    }
    return t;
}

/**
 * Tree statistics after the first n simulations of a trace, shaped
 * (7, size, size). ch0 prior; ch1 visit proportions; ch2 mean value,
 * -1 unvisited; ch3 value std, 1 unvisited; ch4 latest-half policy
 * 2*pi(n) - pi(n/2); ch5/ch6 mean/std over simulations in (n/2, n]
 * only, -1/1 when the window never visited the action. Deliberately
 * contains nothing that identifies n itself.
 */
inline Tensor mcts_features(const SearchTrace& trace, int n) {
    if (n < 2 || n > trace.simulations())
        throw std::out_of_range("simulation count out of range for trace");
    int sz = trace.root.size();
    size_t cells = static_cast<size_t>(trace.num_actions());
    int half = n / 2;

    std::vector<int> cnt(cells, 0), cnt_half(cells, 0), wcnt(cells, 0);
    std::vector<double> sum(cells, 0.0), wsum(cells, 0.0);
    for (int i = 2; i <= n; ++i) {
        auto [a, v] = trace.steps[static_cast<size_t>(i - 2)];
        size_t ai = static_cast<size_t>(a);
        ++cnt[ai];
        sum[ai] += v;
        if (i <= half) {
            ++cnt_half[ai];
        } else {
            ++wcnt[ai];
            wsum[ai] += v;
        }
    }
    // Second pass keeps the variance centered instead of relying on
    // sum-of-squares cancellation.
    std::vector<double> ss(cells, 0.0), wss(cells, 0.0);
    for (int i = 2; i <= n; ++i) {
        auto [a, v] = trace.steps[static_cast<size_t>(i - 2)];
        size_t ai = static_cast<size_t>(a);
        double d = v - sum[ai] / cnt[ai];
        ss[ai] = std::fma(d, d, ss[ai]);
        if (i > half) {
            double dw = v - wsum[ai] / wcnt[ai];
            wss[ai] = std::fma(dw, dw, wss[ai]);
        }
    }

    std::vector<double> pi_half(cells, 0.0);
    if (half >= 2) {
        for (size_t a = 0; a < cells; ++a)
            pi_half[a] = static_cast<double>(cnt_half[a]) / (half - 1);
    } else {
        // A one-simulation search has no visits; its policy collapses
        // to the prior favorite, matching root_policy at n = 1.
        pi_half[static_cast<size_t>(argmax_lowest(trace.root_prior))] = 1.0;
    }

    Tensor t = Tensor::zeros({kMctsChannels, sz, sz});
    double* d = t.data.data();
    double total = static_cast<double>(n - 1);
    for (size_t a = 0; a < cells; ++a) {
        double pi_n = static_cast<double>(cnt[a]) / total;
        d[0 * cells + a] = trace.root_prior[a];
        d[1 * cells + a] = pi_n;
        d[2 * cells + a] = cnt[a] > 0 ? sum[a] / cnt[a] : -1.0;
        d[3 * cells + a] = cnt[a] > 0 ? std::sqrt(ss[a] / cnt[a]) : 1.0;
        d[4 * cells + a] = 2.0 * pi_n - pi_half[a];
        d[5 * cells + a] = wcnt[a] > 0 ? wsum[a] / wcnt[a] : -1.0;
        d[6 * cells + a] = wcnt[a] > 0 ? std::sqrt(wss[a] / wcnt[a]) : 1.0;
    }
    return t;
}

/**
 * Policy-value evaluator backed by a state-only network. Results are
 * memoized by position; entries verify the exact stone layout so a
 * hash collision can never leak a wrong evaluation. The cache is
 * transparent: outputs are bit-identical with it on or off.
 */
class NetEvaluator : public Evaluator {
public:
    explicit NetEvaluator(const Network& net, size_t cache_capacity = 1u << 21)
        : net_(&net), ws_(net.make_workspace()), cache_capacity_(cache_capacity) {
        if (net.config().uses_mcts_features())
            throw std::invalid_argument("policy-value evaluation needs a state-only network");
        if (net.config().board_size < 1)
            throw std::invalid_argument("bad network board size");
    }

    Evaluation evaluate(const GameState& state) override {
        PackedBoard key = pack(state);
        if (cache_capacity_ > 0) {
            auto it = cache_.find(state.hash());
            if (it != cache_.end() && it->second.board == key) return it->second.eval;
        }
        Tensor feat = state_features(state);
        NetOutput out = net_->forward(feat.data.data(), nullptr, ws_, FeatureDrop::kBoth);
        Evaluation e{out.p, out.v};
        if (cache_capacity_ > 0) {
            if (cache_.size() >= cache_capacity_) cache_.clear();
            cache_.emplace(state.hash(), Entry{key, e});
        }
        return e;
    }

    size_t cache_size() const { return cache_.size(); }

private:
    // Two bits per cell plus the side to move; fits any board up to 9x9.
    using PackedBoard = std::array<uint64_t, 3>;

    static PackedBoard pack(const GameState& s) {
        PackedBoard packed{0, 0, 0};
        int sz = s.size();
        for (int r = 0; r < sz; ++r) {
            for (int c = 0; c < sz; ++c) {
                int idx = r * sz + c;
                uint64_t code = static_cast<uint64_t>(s.cell(r, c));
                packed[static_cast<size_t>(idx >> 5)] |= code << ((idx & 31) * 2);
            }
        }
        packed[2] |= static_cast<uint64_t>(s.to_move()) << 63;
        return packed;
    }

    struct Entry {
        PackedBoard board;
        Evaluation eval;
    };

    const Network* net_;
    Network::Workspace ws_;
    size_t cache_capacity_;
    std::unordered_map<uint64_t, Entry> cache_;
};

}  // namespace dsmcts
