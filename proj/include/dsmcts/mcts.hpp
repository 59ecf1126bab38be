#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dsmcts/nogo.hpp"

namespace dsmcts {

/** Policy prior over all board cells (illegal cells ignored) plus a value in [-1,1]. */
struct Evaluation {
    std::vector<double> policy;
    double value = 0.0;
};

class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual Evaluation evaluate(const GameState& state) = 0;
};

/** Uniform prior, zero value. Useful for bootstrap self-play and tests. */
class UniformEvaluator : public Evaluator {
public:
    Evaluation evaluate(const GameState& state) override {
        Evaluation e;
        e.policy.assign(static_cast<size_t>(state.num_cells()),
                        1.0 / static_cast<double>(state.num_cells()));
        e.value = 0.0;
        return e;
    }
};

struct SearchParams {
    double c_puct = 1.5;
    bool dirichlet_noise = false;
    double dirichlet_alpha_scale = 10.0;  // alpha = scale / legal move count
    double dirichlet_weight = 0.25;
};

/**
 * Compact record of one search: the root state, the prior the root actually
 * used (after optional noise), and one (action, value) pair per simulation
 * from the second onward. The first simulation only evaluates the root, so
 * it contributes no pair. Values are from the root player's view. Root
 * visit-count and Q snapshots at any simulation count are reconstructed by
 * replaying a prefix of the pairs.
 */
struct SearchTrace {
    GameState root{5};
    std::vector<double> root_prior;  // per cell; zero on illegal cells
    std::vector<std::pair<int16_t, double>> steps;

    int simulations() const { return 1 + static_cast<int>(steps.size()); }
    int num_actions() const { return static_cast<int>(root_prior.size()); }
};

struct RootSnapshot {
    std::vector<int> counts;  // visits per cell
    std::vector<double> q;    // mean value per cell from the root player's view; -1 if unvisited
    int sims = 0;
};

/** Root statistics after the first n simulations, rebuilt from the trace. */
inline RootSnapshot root_snapshot(const SearchTrace& trace, int n) {
    if (n < 1 || n > trace.simulations()) throw std::out_of_range("snapshot index out of range");
    RootSnapshot snap;
    snap.sims = n;
    snap.counts.assign(static_cast<size_t>(trace.num_actions()), 0);
    std::vector<double> w(static_cast<size_t>(trace.num_actions()), 0.0);
    for (int i = 0; i < n - 1; ++i) {
        auto [a, v] = trace.steps[static_cast<size_t>(i)];
        snap.counts[a] += 1;
        w[a] += v;
    }
    snap.q.assign(static_cast<size_t>(trace.num_actions()), -1.0);
    for (size_t a = 0; a < w.size(); ++a)
        if (snap.counts[a] > 0) snap.q[a] = w[a] / snap.counts[a];
    return snap;
}

inline int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    return best;
}

/**
 * Best root action after n simulations: the max-visit action with ties
 * broken by lowest cell index. With no visits yet (n = 1) it falls back to
 * the argmax of the root prior.
 */
inline int best_action(const SearchTrace& trace, int n) {
    RootSnapshot snap = root_snapshot(trace, n);
    int total = 0;
    for (int c : snap.counts) total += c;
    if (total == 0) return argmax_lowest(trace.root_prior);
    int best = 0;
    for (int a = 1; a < trace.num_actions(); ++a)
        if (snap.counts[static_cast<size_t>(a)] > snap.counts[static_cast<size_t>(best)]) best = a;
    return best;
}

/**
 * Visit-count policy pi(a) proportional to N(a)^(1/tau). tau = 0 selects the
 * zero-temperature limit: one-hot on best_action. With no visits (n = 1) the
 * policy is one-hot on the prior argmax.
 */
inline std::vector<double> root_policy(const SearchTrace& trace, int n, double tau) {
    if (tau < 0.0) throw std::invalid_argument("temperature must be non-negative");
    size_t cells = static_cast<size_t>(trace.num_actions());
    std::vector<double> pi(cells, 0.0);
    RootSnapshot snap = root_snapshot(trace, n);
    int total = 0;
    for (int c : snap.counts) total += c;
    if (total == 0 || tau == 0.0) {
        pi[static_cast<size_t>(best_action(trace, n))] = 1.0;
        return pi;
    }
    // N^(1/tau) in log space to survive extreme temperatures.
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(cells, -std::numeric_limits<double>::infinity());
    for (size_t a = 0; a < cells; ++a) {
        if (snap.counts[a] == 0) continue;
        logs[a] = std::log(static_cast<double>(snap.counts[a])) / tau;
        mx = std::max(mx, logs[a]);
    }
    double sum = 0.0;
    for (size_t a = 0; a < cells; ++a) {
        if (snap.counts[a] == 0) continue;
        pi[a] = std::exp(logs[a] - mx);
        sum += pi[a];
    }
    for (auto& x : pi) x /= sum;
    return pi;
}

/**
 * One-owner PUCT search tree over NoGo states. Every run_simulation() call
 * performs one selection-expansion-evaluation-backup pass; the first call
 * evaluates the root without selecting an action. Unvisited actions have
 * Q = -1 (a loss) until proven otherwise.
 */
class SearchTree {
public:
    struct Node {
        explicit Node(GameState s) : state(std::move(s)), terminal(state.is_terminal()) {}
        GameState state;
        bool terminal;
        bool expanded = false;
        std::vector<Move> moves;
        std::vector<double> prior;  // per legal move, normalized
        std::vector<int> n;
        std::vector<double> w;
        std::vector<std::unique_ptr<Node>> children;
    };

    SearchTree(const GameState& root, Evaluator& evaluator, SearchParams params, uint64_t seed)
        : evaluator_(evaluator), params_(params), rng_(seed), root_(root) {
        if (root.is_terminal()) throw std::invalid_argument("search requires a non-terminal root");
        trace_.root = root;
        trace_.root_prior.assign(static_cast<size_t>(root.num_cells()), 0.0);
    }

    int simulations() const { return sims_; }
    const SearchTrace& trace() const { return trace_; }
    const Node& root_node() const { return root_; }

    std::vector<int> root_counts() const {
        std::vector<int> counts(static_cast<size_t>(root_.state.num_cells()), 0);
        for (size_t i = 0; i < root_.moves.size(); ++i)
            counts[static_cast<size_t>(move_index(root_.moves[i], root_.state.size()))] =
                root_.n[i];
        return counts;
    }

    void run_simulation() {
        if (sims_ == 0) {
            expand(root_, true);
            sims_ = 1;
            for (size_t i = 0; i < root_.moves.size(); ++i)
                trace_.root_prior[static_cast<size_t>(
                    move_index(root_.moves[i], root_.state.size()))] = root_.prior[i];
            return;
        }
        Node* node = &root_;
        path_.clear();
        double value = 0.0;
        for (;;) {
            if (node->terminal) {
                // The player to move has no legal move and loses.
                value = -1.0;
                break;
            }
            if (!node->expanded) {
                value = expand(*node, false);
                break;
            }
            int a = select_puct(*node);
            if (!node->children[static_cast<size_t>(a)]) {
                node->children[static_cast<size_t>(a)] =
                    std::make_unique<Node>(node->state.play(node->moves[static_cast<size_t>(a)]));
            }
            path_.emplace_back(node, a);
            node = node->children[static_cast<size_t>(a)].get();
        }
        // Walk back up, flipping perspective at each edge.
        for (auto it = path_.rbegin(); it != path_.rend(); ++it) {
            value = -value;
            it->first->w[static_cast<size_t>(it->second)] += value;
            it->first->n[static_cast<size_t>(it->second)] += 1;
        }
        sims_ += 1;
        int root_action = move_index(root_.moves[static_cast<size_t>(path_.front().second)],
                                     root_.state.size());
        trace_.steps.emplace_back(static_cast<int16_t>(root_action), value);
    }

private:
    double expand(Node& node, bool is_root) {
        Evaluation eval = evaluator_.evaluate(node.state);
        if (eval.policy.size() != static_cast<size_t>(node.state.num_cells()))
            throw std::invalid_argument("evaluator policy size mismatch");
        node.moves = node.state.legal_moves();
        size_t k = node.moves.size();
        node.prior.assign(k, 0.0);
        double sum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            double p = eval.policy[static_cast<size_t>(move_index(node.moves[i], node.state.size()))];
            node.prior[i] = std::max(p, 0.0);
            sum += node.prior[i];
        }
        if (sum > 0.0) {
            for (auto& p : node.prior) p /= sum;
        } else {
            for (auto& p : node.prior) p = 1.0 / static_cast<double>(k);
        }
        if (is_root && params_.dirichlet_noise) mix_dirichlet(node);
        node.n.assign(k, 0);
        node.w.assign(k, 0.0);
        node.children.resize(k);
        node.expanded = true;
        return eval.value;
    }

    void mix_dirichlet(Node& node) {
        size_t k = node.moves.size();
        double alpha = params_.dirichlet_alpha_scale / static_cast<double>(k);
        std::gamma_distribution<double> gamma(alpha, 1.0);
        std::vector<double> noise(k);
        double sum = 0.0;
        for (auto& x : noise) {
            x = gamma(rng_);
            sum += x;
        }
        if (sum <= 0.0) return;
        for (size_t i = 0; i < k; ++i)
            node.prior[i] = (1.0 - params_.dirichlet_weight) * node.prior[i] +
                            params_.dirichlet_weight * noise[i] / sum;
    }

    int select_puct(const Node& node) const {
        int parent_visits = 1;  // the node's own evaluation
        for (int c : node.n) parent_visits += c;
        double sqrt_n = std::sqrt(static_cast<double>(parent_visits));
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < node.moves.size(); ++i) {
            double q = node.n[i] > 0 ? node.w[i] / node.n[i] : -1.0;
            double score = q + params_.c_puct * node.prior[i] * sqrt_n / (1.0 + node.n[i]);
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    Evaluator& evaluator_;
    SearchParams params_;
    std::mt19937_64 rng_;
    Node root_;
    SearchTrace trace_;
    int sims_ = 0;
    std::vector<std::pair<Node*, int>> path_;
};

inline SearchTrace search(const GameState& root, int n_sims, Evaluator& evaluator,
                          const SearchParams& params = {}, uint64_t seed = 0) {
    if (n_sims < 1) throw std::invalid_argument("need at least one simulation");
    SearchTree tree(root, evaluator, params, seed);
    for (int i = 0; i < n_sims; ++i) tree.run_simulation();
    return tree.trace();
}

}  // namespace dsmcts
