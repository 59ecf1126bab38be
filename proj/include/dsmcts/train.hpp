#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsmcts/network.hpp"
#include "dsmcts/selfplay.hpp"
#include "dsmcts/util.hpp"

namespace dsmcts {

struct TrainConfig {
    int epochs = 8;
    int batch_size = 64;
    double lr = 0.02;
    double momentum = 0.9;
    // lr is multiplied by lr_decay at each listed epoch (0-based).
    std::vector<int> lr_drop_epochs{4, 6};
    double lr_decay = 0.1;
    // Per-sample feature dropout split for networks with tree features.
    double p_both = 0.5;
    double p_state_only = 0.25;
    double p_mcts_only = 0.25;
    uint64_t seed = 1;
};

struct EpochStats {
    double mean_loss = 0.0;
    double lr = 0.0;
};

struct TrainStats {
    std::vector<EpochStats> epochs;
    size_t skipped_steps = 0;  // non-finite gradients rejected by the optimizer
};

inline Sample row_to_sample(const DataRow& row, FeatureDrop drop) {
    Sample s;
    s.state_feat = row.state_feat;
    s.mcts_feat = row.mcts_feat;
    s.u_target = row.u_target;
    s.pi_target = row.pi_target;
    s.z_target = row.z_target;
    s.drop = drop;
    return s;
}

/** Draws indices with replacement proportionally to row weights. */
class WeightedSampler {
public:
    explicit WeightedSampler(const std::vector<DataRow>& rows) {
        cum_.reserve(rows.size());
        double acc = 0.0;
        for (const auto& r : rows) {
            if (r.weight < 0.0 || !std::isfinite(r.weight))
                throw std::invalid_argument("bad row weight");
            acc += r.weight;
            cum_.push_back(acc);
        }
        if (cum_.empty() || acc <= 0.0) throw std::invalid_argument("no sampleable rows");
    }

    template <typename Rng>
    size_t draw(Rng& rng) const {
        double r = canonical(rng) * cum_.back();
        auto it = std::upper_bound(cum_.begin(), cum_.end(), r);
        if (it == cum_.end()) --it;
        return static_cast<size_t>(it - cum_.begin());
    }

private:
    std::vector<double> cum_;
};

/**
 * SGD training loop with weighted sampling and, for networks that take
 * tree features, the per-sample both/state-only/tree-only dropout split.
 */
inline TrainStats train_network(Network& net, const Dataset& ds, const TrainConfig& cfg) {
    if (ds.rows.empty()) throw std::invalid_argument("empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("bad training config");
    const NetConfig& nc = net.config();
    if (nc.board_size != ds.board_size) throw std::invalid_argument("board size mismatch");
    if (nc.mcts_channels != ds.mcts_channels)
        throw std::invalid_argument("feature schema mismatch");
    bool with_tree = nc.uses_mcts_features();
    if (with_tree) {
        double psum = cfg.p_both + cfg.p_state_only + cfg.p_mcts_only;
        if (std::abs(psum - 1.0) > 1e-9 || cfg.p_both < 0.0 || cfg.p_state_only < 0.0 ||
            cfg.p_mcts_only < 0.0)
            throw std::invalid_argument("dropout split must be a distribution");
    }

    WeightedSampler sampler(ds.rows);
    std::mt19937_64 rng(cfg.seed);
    SgdMomentum opt(cfg.momentum);
    Network::Workspace ws = net.make_workspace();
    TrainStats stats;
    double lr = cfg.lr;
    size_t steps_per_epoch =
        std::max<size_t>(1, ds.rows.size() / static_cast<size_t>(cfg.batch_size));
    std::vector<Sample> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (std::find(cfg.lr_drop_epochs.begin(), cfg.lr_drop_epochs.end(), epoch) !=
            cfg.lr_drop_epochs.end())
            lr *= cfg.lr_decay;
        double loss_sum = 0.0;
        for (size_t step = 0; step < steps_per_epoch; ++step) {
            batch.clear();
            for (int b = 0; b < cfg.batch_size; ++b) {
                size_t idx = sampler.draw(rng);
                FeatureDrop drop = FeatureDrop::kBoth;
                if (with_tree) {
                    double r = canonical(rng);
                    if (r < cfg.p_state_only) {
                        drop = FeatureDrop::kStateOnly;
                    } else if (r < cfg.p_state_only + cfg.p_mcts_only) {
                        drop = FeatureDrop::kMctsOnly;
                    }
                }
                batch.push_back(row_to_sample(ds.rows[idx], drop));
            }
            auto result = opt.step(net, batch, lr, ws);
            if (!result.applied) ++stats.skipped_steps;
            loss_sum += result.loss;
        }
        stats.epochs.push_back({loss_sum / static_cast<double>(steps_per_epoch), lr});
    }
    return stats;
}

/** Uncertainty-head outputs for every row, forwarded without dropout. */
inline std::vector<double> score_rows(const Network& net, const Dataset& ds, unsigned workers) {
    std::vector<double> scores(ds.rows.size());
    workers = std::max(1u, workers);
    std::vector<Network::Workspace> wss;
    wss.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) wss.push_back(net.make_workspace());
    parallel_for_indexed(ds.rows.size(), workers, [&](size_t i, unsigned w) {
        const DataRow& r = ds.rows[i];
        const double* mcts = r.mcts_feat.empty() ? nullptr : r.mcts_feat.data();
        scores[i] = net.forward(r.state_feat.data(), mcts, wss[w], FeatureDrop::kBoth).u;
    });
    return scores;
}

/** Before-search uncertainty score for each labeled state. */
inline std::vector<double> state_un_scores(const Network& net,
                                           const std::vector<LabeledState>& labeled,
                                           unsigned workers) {
    if (net.config().uses_mcts_features())
        throw std::invalid_argument("before-search scoring needs a state-only network");
    std::vector<double> scores(labeled.size());
    workers = std::max(1u, workers);
    std::vector<Network::Workspace> wss;
    wss.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) wss.push_back(net.make_workspace());
    parallel_for_indexed(labeled.size(), workers, [&](size_t i, unsigned w) {
        Tensor feat = state_features(labeled[i].state);
        scores[i] = net.forward(feat.data.data(), nullptr, wss[w], FeatureDrop::kBoth).u;
    });
    return scores;
}

/**
 * Deterministic shuffle-split into (train, holdout). Holdout size is
 * round(fraction * n), at least 1 when the fraction is positive.
 */
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_holdout(const std::vector<T>& items,
                                                        double holdout_fraction, uint64_t seed) {
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
        throw std::invalid_argument("holdout fraction must be in [0,1)");
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
    size_t holdout = static_cast<size_t>(std::lround(holdout_fraction * items.size()));
    if (holdout_fraction > 0.0 && holdout == 0 && !items.empty()) holdout = 1;
    std::pair<std::vector<T>, std::vector<T>> out;
    for (size_t i = 0; i < order.size(); ++i) {
        if (i < holdout) {
            out.second.push_back(items[order[i]]);
        } else {
            out.first.push_back(items[order[i]]);
        }
    }
    return out;
}

}  // namespace dsmcts
