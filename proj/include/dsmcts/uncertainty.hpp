#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dsmcts/mcts.hpp"

namespace dsmcts {

/**
 * Approximate reward of a root policy against the final search's action
 * values: R = sum_a policy(a) * q_final(a). Unvisited actions carry -1 in
 * q_final, so placing mass on them is maximally pessimistic.
 */
inline double approx_reward(const std::vector<double>& policy,
                            const std::vector<double>& q_final) {
    if (policy.size() != q_final.size()) throw std::invalid_argument("reward dimension mismatch");
    double r = 0.0;
    for (size_t a = 0; a < policy.size(); ++a) r += policy[a] * q_final[a];
    return r;
}

/**
 * Per-state uncertainty labels over n = 1..N_max.
 *
 * u_series[n-1] = U(s,n) is 1 iff some n' in [n, N_max] has
 * R(N_max) - R(n') >= eps, where R(n) is the approximate reward of the
 * zero-temperature policy after n simulations. The series is non-increasing
 * and ends at 0; m is the first n with U(s,n) = 0.
 */
struct UncertaintyLabel {
    std::vector<uint8_t> u_series;
    std::vector<double> r_series;
    int m = 1;
    int n_max = 0;
    double eps = 0.0;
    std::vector<double> final_policy;  // visit proportions at N_max (tau = 1)
    std::vector<double> final_q;       // Q(s,*,N_max), -1 where unvisited
    double z = 0.0;                    // game outcome for the root player, set by the pipeline
};

inline UncertaintyLabel labels_from_trace(const SearchTrace& trace, int n_max, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
    if (n_max < 1 || n_max > trace.simulations())
        throw std::invalid_argument("trace too short for requested N_max");
    size_t cells = static_cast<size_t>(trace.num_actions());

    UncertaintyLabel label;
    label.n_max = n_max;
    label.eps = eps;

    RootSnapshot final_snap = root_snapshot(trace, n_max);
    label.final_q = final_snap.q;
    label.final_policy = root_policy(trace, n_max, 1.0);

    // Zero-temperature best action after each n, tracked incrementally.
    label.r_series.resize(static_cast<size_t>(n_max));
    std::vector<int> counts(cells, 0);
    int best = argmax_lowest(trace.root_prior);
    label.r_series[0] = label.final_q[static_cast<size_t>(best)];
    for (int n = 2; n <= n_max; ++n) {
        int a = trace.steps[static_cast<size_t>(n - 2)].first;
        counts[static_cast<size_t>(a)] += 1;
        if (counts[static_cast<size_t>(a)] > counts[static_cast<size_t>(best)] ||
            (counts[static_cast<size_t>(a)] == counts[static_cast<size_t>(best)] && a < best)) {
            best = a;
        }
        label.r_series[static_cast<size_t>(n - 1)] = label.final_q[static_cast<size_t>(best)];
    }

    // Suffix minimum turns the "exists a later deficit" condition into one
    // backward pass.
    label.u_series.assign(static_cast<size_t>(n_max), 0);
    double r_final = label.r_series[static_cast<size_t>(n_max - 1)];
    double suffix_min = std::numeric_limits<double>::infinity();
    for (int n = n_max; n >= 1; --n) {
        suffix_min = std::min(suffix_min, label.r_series[static_cast<size_t>(n - 1)]);
        label.u_series[static_cast<size_t>(n - 1)] = (r_final - suffix_min >= eps) ? 1 : 0;
    }
    label.m = n_max;
    for (int n = 1; n <= n_max; ++n) {
        if (label.u_series[static_cast<size_t>(n - 1)] == 0) {
            label.m = n;
            break;
        }
    }
    return label;
}

/**
 * Wrong-prediction probability of a temperature-scaled prior:
 * u = 1 - max_a p(a)^(1/tau) / sum_a p(a)^(1/tau), computed in log space.
 */
inline double calibrated_uncertainty(const std::vector<double>& prior, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
    if (prior.empty()) throw std::invalid_argument("empty prior");
    double mx = -std::numeric_limits<double>::infinity();
    for (double p : prior) {
        if (p < 0.0) throw std::invalid_argument("negative prior entry");
        if (p > 0.0) mx = std::max(mx, std::log(p) / tau);
    }
    if (mx == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("prior has no support");
    double sum = 0.0;
    for (double p : prior) {
        if (p > 0.0) sum += std::exp(std::log(p) / tau - mx);
    }
    return 1.0 - 1.0 / sum;
}

/** Empirical distribution of minimum simulation counts. */
struct MDistribution {
    int n_max = 0;
    int64_t total = 0;
    // counts_below[n] = number of samples with M < n, for n = 1..n_max.
    std::vector<int64_t> counts_below;

    static MDistribution from_samples(const std::vector<int>& m_values, int n_max) {
        if (m_values.empty()) throw std::invalid_argument("empty M distribution");
        if (n_max < 1) throw std::invalid_argument("bad N_max");
        MDistribution d;
        d.n_max = n_max;
        d.total = static_cast<int64_t>(m_values.size());
        std::vector<int64_t> hist(static_cast<size_t>(n_max) + 1, 0);
        for (int m : m_values) {
            if (m < 1 || m > n_max) throw std::invalid_argument("M sample out of range");
            hist[static_cast<size_t>(m)] += 1;
        }
        d.counts_below.assign(static_cast<size_t>(n_max) + 1, 0);
        for (int n = 1; n <= n_max; ++n)
            d.counts_below[static_cast<size_t>(n)] =
                d.counts_below[static_cast<size_t>(n - 1)] + hist[static_cast<size_t>(n - 1)];
        return d;
    }

    double p_less(int n) const {
        if (n < 1 || n > n_max) throw std::out_of_range("n out of range");
        return static_cast<double>(counts_below[static_cast<size_t>(n)]) /
               static_cast<double>(total);
    }
};

/**
 * Expected per-move simulation cost when stopping at checkpoint n with an
 * uncertainty predictor of accuracy alpha:
 * f(alpha, n) = (n*alpha + N_max*(1-alpha)) * p(M < n) + N_max * p(M >= n).
 */
inline double expected_cost(double alpha, int n, int n_max, const MDistribution& dist) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha outside [0,1]");
    if (dist.n_max != n_max) throw std::invalid_argument("distribution N_max mismatch");
    double p = dist.p_less(n);
    return (n * alpha + n_max * (1.0 - alpha)) * p + n_max * (1.0 - p);
}

/**
 * Exact integer comparison key for f(k/den, n): smaller key means smaller
 * cost. Scaling by den*total removes both denominators, so argmin sets are
 * computed without floating-point ties.
 */
inline int64_t cost_key(int64_t k, int64_t den, int n, int n_max, const MDistribution& dist) {
    int64_t c = dist.counts_below[static_cast<size_t>(n)];
    return (static_cast<int64_t>(n) * k + static_cast<int64_t>(n_max) * (den - k)) * c +
           den * static_cast<int64_t>(n_max) * (dist.total - c);
}

struct CheckpointChoice {
    int n_star = 1;
    std::vector<double> f_values;  // f(1, n) for n = 1..n_max
    MDistribution dist;
};

/** Linear scan of f(1, n) over n = 1..N_max; lowest n wins ties (exact arithmetic). */
inline CheckpointChoice choose_checkpoint(const std::vector<int>& m_samples, int n_max) {
    CheckpointChoice choice;
    choice.dist = MDistribution::from_samples(m_samples, n_max);
    choice.f_values.resize(static_cast<size_t>(n_max));
    int64_t best_key = std::numeric_limits<int64_t>::max();
    for (int n = 1; n <= n_max; ++n) {
        choice.f_values[static_cast<size_t>(n - 1)] = expected_cost(1.0, n, n_max, choice.dist);
        int64_t key = cost_key(1, 1, n, n_max, choice.dist);
        if (key < best_key) {
            best_key = key;
            choice.n_star = n;
        }
    }
    return choice;
}

}  // namespace dsmcts
