#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsmcts/features.hpp"
#include "dsmcts/mcts.hpp"
#include "dsmcts/network.hpp"
#include "dsmcts/selfplay.hpp"
#include "dsmcts/uncertainty.hpp"
#include "dsmcts/util.hpp"

namespace dsmcts {

/** How the before-search gate scores a position. */
enum class StopMode : uint8_t { kStateUn = 0, kCalibrated = 1 };

struct DSConfig {
    int n_max = 400;
    // checkpoints[0] = 0 is the before-search gate; later entries are
    // simulation counts where the tree predictor is consulted.
    std::vector<int> checkpoints{0};
    std::vector<double> thresholds{0.0};
    double tau = 1.0;  // calibration temperature for kCalibrated
    StopMode mode = StopMode::kStateUn;
    SearchParams search;
};

inline void validate_ds_config(const DSConfig& cfg) {
    if (cfg.n_max < 1) throw std::invalid_argument("n_max must be positive");
    if (cfg.checkpoints.empty() || cfg.checkpoints.front() != 0)
        throw std::invalid_argument("first checkpoint must be 0");
    if (cfg.checkpoints.size() != cfg.thresholds.size())
        throw std::invalid_argument("checkpoints and thresholds differ in length");
    for (size_t i = 1; i < cfg.checkpoints.size(); ++i) {
        if (cfg.checkpoints[i] <= cfg.checkpoints[i - 1])
            throw std::invalid_argument("checkpoints must increase strictly");
        if (cfg.checkpoints[i] < 2 || cfg.checkpoints[i] > cfg.n_max)
            throw std::invalid_argument("search checkpoints must lie in [2, n_max]");
    }
    for (double t : cfg.thresholds) {
        // Above-1 thresholds are legal: they force a stop and are handy
        // for degenerate-config experiments.
        if (!(t >= 0.0) || !std::isfinite(t))
            throw std::invalid_argument("thresholds must be finite and non-negative");
    }
    if (cfg.mode == StopMode::kCalibrated && !(cfg.tau > 0.0))
        throw std::invalid_argument("calibration temperature must be positive");
}

/** 0, n*, 2n*, 4n*, ... strictly below n_max. */
inline std::vector<int> doubling_checkpoints(int n_star, int n_max) {
    if (n_star < 2 || n_star >= n_max) throw std::invalid_argument("bad first checkpoint");
    std::vector<int> c{0};
    for (long long x = n_star; x < n_max; x *= 2) c.push_back(static_cast<int>(x));
    return c;
}

struct StopDecision {
    bool stopped_early = false;
    int sims_used = 0;
    std::string rule = "budget";  // state-un | calibrated | mcts-un@<c> | STOP | budget
};

struct DSResult {
    // Prior distribution when answered before searching, otherwise the
    // one-hot argmax policy of the stopped search.
    std::vector<double> policy;
    int action = 0;
    StopDecision decision;
    // Search trace up to sims_used; empty (no steps, no prior) when the
    // gate answered before any simulation.
    SearchTrace trace;
};

/** Evaluator policy masked to legal moves and renormalized. */
inline std::vector<double> masked_prior(const GameState& state, const Evaluation& eval) {
    size_t cells = static_cast<size_t>(state.num_cells());
    if (eval.policy.size() != cells) throw std::invalid_argument("policy size mismatch");
    std::vector<double> pi(cells, 0.0);
    auto legal = state.legal_moves();
    double sum = 0.0;
    for (Move m : legal) {
        size_t idx = static_cast<size_t>(move_index(m, state.size()));
        double p = eval.policy[idx];
        if (p > 0.0) {
            pi[idx] = p;
            sum += p;
        }
    }
    if (sum > 0.0) {
        for (double& p : pi) p /= sum;
    } else {
        for (Move m : legal)
            pi[static_cast<size_t>(move_index(m, state.size()))] =
                1.0 / static_cast<double>(legal.size());
    }
    return pi;
}

/**
 * Search with dynamic stopping. The before-search gate consults either
 * the state uncertainty head or the calibrated prior; later checkpoints
 * consult the tree-feature network on T(s, c[i]). Between checkpoints
 * the search runs untouched, so with all thresholds at zero the trace
 * is bit-identical to a plain search under the same seed.
 */
inline DSResult ds_search(const GameState& state, const DSConfig& cfg, Evaluator& pv,
                          const Network* state_un, const Network* mcts_un, uint64_t seed) {
    validate_ds_config(cfg);
    if (state.is_terminal()) throw std::invalid_argument("search requires a non-terminal state");
    if (cfg.mode == StopMode::kStateUn && state_un == nullptr)
        throw std::invalid_argument("state uncertainty network required");
    if (cfg.checkpoints.size() > 1 && mcts_un == nullptr)
        throw std::invalid_argument("tree uncertainty network required");

    DSResult out;
    double u0;
    if (cfg.mode == StopMode::kStateUn) {
        Tensor feat = state_features(state);
        Network::Workspace ws = state_un->make_workspace();
        u0 = state_un->forward(feat.data.data(), nullptr, ws, FeatureDrop::kBoth).u;
    } else {
        u0 = calibrated_uncertainty(masked_prior(state, pv.evaluate(state)), cfg.tau);
    }
    if (u0 < cfg.thresholds.front()) {
        out.policy = masked_prior(state, pv.evaluate(state));
        out.action = argmax_lowest(out.policy);
        out.decision = {true, 0, cfg.mode == StopMode::kStateUn ? "state-un" : "calibrated"};
        out.trace.root = state;
        return out;
    }

    SearchTree tree(state, pv, cfg.search, seed);
    Network::Workspace tree_ws;
    Tensor state_feat;
    if (cfg.checkpoints.size() > 1 && mcts_un != nullptr) {
        tree_ws = mcts_un->make_workspace();
        state_feat = state_features(state);
    }
    size_t ci = 1;
    for (int sim = 1; sim <= cfg.n_max; ++sim) {
        tree.run_simulation();
        while (ci < cfg.checkpoints.size() && cfg.checkpoints[ci] == sim && mcts_un != nullptr) {
            Tensor tree_feat = mcts_features(tree.trace(), sim);
            double u = mcts_un
                           ->forward(state_feat.data.data(), tree_feat.data.data(), tree_ws,
                                     FeatureDrop::kBoth)
                           .u;
            if (u < cfg.thresholds[ci]) {
                out.trace = tree.trace();
                out.action = best_action(out.trace, sim);
                out.policy = root_policy(out.trace, sim, 0.0);
                out.decision = {true, sim, "mcts-un@" + std::to_string(sim)};
                return out;
            }
            ++ci;
        }
    }
    out.trace = tree.trace();
    out.action = best_action(out.trace, cfg.n_max);
    out.policy = root_policy(out.trace, cfg.n_max, 0.0);
    out.decision = {false, cfg.n_max, "budget"};
    return out;
}

/**
 * Visit-gap termination rule: stop once the lead of the most visited
 * root action exceeds every simulation that is still left, so the
 * argmax can no longer change.
 */
inline bool stop_rule_STOP(const SearchTrace& trace, int n, int n_max) {
    if (n < 1 || n > trace.simulations()) throw std::out_of_range("n out of range");
    if (n >= n_max) return false;  // nothing left to save
    RootSnapshot snap = root_snapshot(trace, n);
    int best = 0, second = 0;
    for (int c : snap.counts) {
        if (c > best) {
            second = best;
            best = c;
        } else if (c > second) {
            second = c;
        }
    }
    return best - second > n_max - n;
}

struct BaselineResult {
    SearchTrace trace;
    int action = 0;
    StopDecision decision;
};

/** Plain search that ends as soon as the visit-gap rule fires. */
inline BaselineResult stop_search(const GameState& state, int n_max, Evaluator& pv,
                                  const SearchParams& params, uint64_t seed) {
    if (n_max < 1) throw std::invalid_argument("n_max must be positive");
    SearchTree tree(state, pv, params, seed);
    for (int sim = 1; sim <= n_max; ++sim) {
        tree.run_simulation();
        if (sim < n_max && stop_rule_STOP(tree.trace(), sim, n_max)) {
            BaselineResult out;
            out.trace = tree.trace();
            out.action = best_action(out.trace, sim);
            out.decision = {true, sim, "STOP"};
            return out;
        }
    }
    BaselineResult out;
    out.trace = tree.trace();
    out.action = best_action(out.trace, n_max);
    out.decision = {false, n_max, "budget"};
    return out;
}

/** Per-move budget that is cut to reduced_sims with the given probability. */
template <typename Rng>
int random_stop_budget(double fraction, int reduced_sims, int n_max, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("fraction must be in [0,1]");
    if (reduced_sims < 0 || reduced_sims > n_max) throw std::invalid_argument("bad reduced budget");
    return canonical(rng) < fraction ? reduced_sims : n_max;
}

struct CheckpointReport {
    int checkpoint = 0;
    double threshold = 0.0;
    size_t positives = 0;          // states with U(s, c) = 1: must keep searching
    size_t stopped = 0;            // states the predictor would stop here
    size_t stopped_positives = 0;  // stops that were wrong
    double recall = 1.0;           // positives correctly kept searching
    double false_stop_rate = 0.0;  // share of stops that were positives
};

struct ThresholdReport {
    std::vector<CheckpointReport> checkpoints;
    // Mean simulations per state when stops chain sequentially through
    // the checkpoints; states never stopped pay the full budget.
    double projected_avg_sims = 0.0;
    std::vector<size_t> stop_histogram;  // per checkpoint, last bucket = ran to n_max
};

/**
 * Predictor outputs for every labeled state at every checkpoint of the
 * config: scores[i][s] is the uncertainty the stopping rule would see
 * for state s at checkpoint i.
 */
inline std::vector<std::vector<double>> checkpoint_scores(const std::vector<LabeledState>& holdout,
                                                          const DSConfig& cfg,
                                                          const Network* state_un,
                                                          const Network* mcts_un, Evaluator* pv,
                                                          unsigned workers = 1) {
    validate_ds_config(cfg);
    if (holdout.empty()) throw std::invalid_argument("empty holdout");
    if (cfg.mode == StopMode::kStateUn && state_un == nullptr)
        throw std::invalid_argument("state uncertainty network required");
    if (cfg.mode == StopMode::kCalibrated && pv == nullptr)
        throw std::invalid_argument("calibrated mode needs the policy-value evaluator");
    if (cfg.checkpoints.size() > 1 && mcts_un == nullptr)
        throw std::invalid_argument("tree uncertainty network required");
    int n_max = holdout.front().label.n_max;
    if (cfg.n_max != n_max) throw std::invalid_argument("config n_max differs from labels");

    size_t n_checks = cfg.checkpoints.size();
    std::vector<std::vector<double>> scores(n_checks, std::vector<double>(holdout.size(), 0.0));
    workers = std::max(1u, workers);
    std::vector<Network::Workspace> state_ws, tree_ws;
    for (unsigned w = 0; w < workers; ++w) {
        if (cfg.mode == StopMode::kStateUn) state_ws.push_back(state_un->make_workspace());
        if (n_checks > 1) tree_ws.push_back(mcts_un->make_workspace());
    }
    parallel_for_indexed(holdout.size(), workers, [&](size_t s, unsigned w) {
        const LabeledState& ls = holdout[s];
        if (cfg.mode == StopMode::kStateUn) {
            Tensor feat = state_features(ls.state);
            scores[0][s] =
                state_un->forward(feat.data.data(), nullptr, state_ws[w], FeatureDrop::kBoth).u;
        } else {
            scores[0][s] =
                calibrated_uncertainty(masked_prior(ls.state, pv->evaluate(ls.state)), cfg.tau);
        }
        if (n_checks > 1 && mcts_un != nullptr) {
            Tensor state_feat = state_features(ls.state);
            for (size_t i = 1; i < n_checks; ++i) {
                Tensor tree_feat = mcts_features(ls.trace, cfg.checkpoints[i]);
                scores[i][s] = mcts_un
                                   ->forward(state_feat.data.data(), tree_feat.data.data(),
                                             tree_ws[w], FeatureDrop::kBoth)
                                   .u;
            }
        }
    });
    return scores;
}

/** Label for checkpoint c: answering there is wrong iff U(s, max(c,1)) = 1. */
inline bool checkpoint_positive(const LabeledState& ls, int checkpoint) {
    int label_n = std::max(checkpoint, 1);
    return ls.label.u_series[static_cast<size_t>(label_n - 1)] != 0;
}

/**
 * Largest per-checkpoint thresholds that keep at least target_recall of
 * the positive class searching. With positives' scores sorted ascending,
 * the threshold sits on the highest score whose strict-less stop rule
 * can drop no more than (1 - target) of them. Checkpoints with no
 * positive states get threshold 1.
 */
inline std::vector<double> choose_thresholds(const std::vector<LabeledState>& holdout,
                                             const DSConfig& cfg,
                                             const std::vector<std::vector<double>>& scores,
                                             double target_recall) {
    if (!(target_recall > 0.0) || target_recall > 1.0)
        throw std::invalid_argument("target recall must be in (0,1]");
    if (scores.size() != cfg.checkpoints.size())
        throw std::invalid_argument("scores do not match the checkpoint schedule");
    std::vector<double> thresholds;
    for (size_t i = 0; i < cfg.checkpoints.size(); ++i) {
        if (scores[i].size() != holdout.size())
            throw std::invalid_argument("scores do not match the holdout");
        std::vector<double> positive_scores;
        for (size_t s = 0; s < holdout.size(); ++s)
            if (checkpoint_positive(holdout[s], cfg.checkpoints[i]))
                positive_scores.push_back(scores[i][s]);
        if (positive_scores.empty()) {
            thresholds.push_back(1.0);
            continue;
        }
        std::sort(positive_scores.begin(), positive_scores.end());
        double budget = (1.0 - target_recall) * static_cast<double>(positive_scores.size());
        size_t k = static_cast<size_t>(budget);
        thresholds.push_back(positive_scores[k]);
    }
    return thresholds;
}

/**
 * Scores a held-out labeled set against the configured thresholds.
 * Positive labels per checkpoint use U(s, max(c, 1)); the before-search
 * gate is judged against U(s,1) since answering from the prior equals a
 * one-simulation search.
 */
inline ThresholdReport validate_thresholds(const std::vector<LabeledState>& holdout,
                                           const DSConfig& cfg, const Network* state_un,
                                           const Network* mcts_un, Evaluator* pv,
                                           unsigned workers = 1) {
    std::vector<std::vector<double>> scores =
        checkpoint_scores(holdout, cfg, state_un, mcts_un, pv, workers);
    size_t n_checks = cfg.checkpoints.size();
    // stops[i][s]: would checkpoint i stop state s?
    std::vector<std::vector<uint8_t>> stops(n_checks,
                                            std::vector<uint8_t>(holdout.size(), 0));
    for (size_t i = 0; i < n_checks; ++i)
        for (size_t s = 0; s < holdout.size(); ++s)
            stops[i][s] = scores[i][s] < cfg.thresholds[i] ? 1 : 0;

    ThresholdReport report;
    report.stop_histogram.assign(n_checks + 1, 0);
    for (size_t i = 0; i < n_checks; ++i) {
        CheckpointReport cr;
        cr.checkpoint = cfg.checkpoints[i];
        cr.threshold = cfg.thresholds[i];
        for (size_t s = 0; s < holdout.size(); ++s) {
            bool positive = checkpoint_positive(holdout[s], cfg.checkpoints[i]);
            if (positive) ++cr.positives;
            if (stops[i][s]) {
                ++cr.stopped;
                if (positive) ++cr.stopped_positives;
            }
        }
        cr.recall = cr.positives == 0
                        ? 1.0
                        : 1.0 - static_cast<double>(cr.stopped_positives) /
                                    static_cast<double>(cr.positives);
        cr.false_stop_rate = cr.stopped == 0
                                 ? 0.0
                                 : static_cast<double>(cr.stopped_positives) /
                                       static_cast<double>(cr.stopped);
        report.checkpoints.push_back(cr);
    }

    double total = 0.0;
    for (size_t s = 0; s < holdout.size(); ++s) {
        bool stopped = false;
        for (size_t i = 0; i < n_checks; ++i) {
            if (stops[i][s]) {
                total += cfg.checkpoints[i];
                ++report.stop_histogram[i];
                stopped = true;
                break;
            }
        }
        if (!stopped) {
            total += cfg.n_max;
            ++report.stop_histogram[n_checks];
        }
    }
    report.projected_avg_sims = total / static_cast<double>(holdout.size());
    return report;
}

inline std::string stop_mode_name(StopMode m) {
    return m == StopMode::kStateUn ? "state-un" : "calibrated";
}

inline std::string ds_config_text(const DSConfig& cfg) {
    std::ostringstream s;
    // Thresholds gate with a strict comparison, so the text form must
    // survive a parse round trip bit for bit.
    s.precision(17);
    s << "n_max=" << cfg.n_max << "\n";
    s << "checkpoints=";
    for (size_t i = 0; i < cfg.checkpoints.size(); ++i)
        s << (i ? "," : "") << cfg.checkpoints[i];
    s << "\nthresholds=";
    for (size_t i = 0; i < cfg.thresholds.size(); ++i) s << (i ? "," : "") << cfg.thresholds[i];
    s << "\ntau=" << cfg.tau << "\n";
    s << "mode=" << stop_mode_name(cfg.mode) << "\n";
    return s.str();
}

inline DSConfig parse_ds_config(std::istream& in) {
    DSConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        auto trim = [](std::string s) {
            size_t x = s.find_first_not_of(" \t");
            size_t y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto parse_list_int = [&](const std::string& v) {
            std::vector<int> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
            return out;
        };
        auto parse_list_double = [&](const std::string& v) {
            std::vector<double> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
            return out;
        };
        try {
            if (key == "n_max") {
                cfg.n_max = std::stoi(value);
            } else if (key == "checkpoints") {
                cfg.checkpoints = parse_list_int(value);
            } else if (key == "thresholds") {
                cfg.thresholds = parse_list_double(value);
            } else if (key == "tau") {
                cfg.tau = std::stod(value);
            } else if (key == "mode") {
                if (value == "state-un") {
                    cfg.mode = StopMode::kStateUn;
                } else if (value == "calibrated") {
                    cfg.mode = StopMode::kCalibrated;
                } else {
                    throw std::invalid_argument("unknown mode: " + value);
                }
            } else {
                throw std::invalid_argument("unknown key: " + key);
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": bad value for " + key);
        }
    }
    validate_ds_config(cfg);
    return cfg;
}

inline DSConfig parse_ds_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path);
    return parse_ds_config(in);
}

}  // namespace dsmcts
