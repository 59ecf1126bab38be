#include "dsmcts/uncertainty.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace dsmcts;

namespace {

SearchTrace random_trace(int board, int sims, std::mt19937_64& rng) {
    SearchTrace t;
    t.root = GameState(board);
    int cells = board * board;
    t.root_prior.assign(static_cast<size_t>(cells), 0.0);
    double sum = 0.0;
    for (auto& p : t.root_prior) {
        p = static_cast<double>(rng() % 1000 + 1);
        sum += p;
    }
    for (auto& p : t.root_prior) p /= sum;
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 2; i <= sims; ++i) {
        // Zipf-ish action choice so counts are uneven like a real search.
        int a = static_cast<int>(rng() % (static_cast<uint64_t>(rng() % cells) + 1));
        t.steps.emplace_back(static_cast<int16_t>(a), uni(rng));
    }
    return t;
}

// Independent labeler: recomputes every policy through root_policy and
// checks the "exists a later deficit" condition pair by pair.
std::vector<uint8_t> brute_force_u(const SearchTrace& trace, int n_max, double eps) {
    RootSnapshot fin = root_snapshot(trace, n_max);
    std::vector<double> r(static_cast<size_t>(n_max));
    for (int n = 1; n <= n_max; ++n)
        r[static_cast<size_t>(n - 1)] = approx_reward(root_policy(trace, n, 0.0), fin.q);
    std::vector<uint8_t> u(static_cast<size_t>(n_max), 0);
    for (int n = 1; n <= n_max; ++n) {
        for (int np = n; np <= n_max; ++np) {
            if (r[static_cast<size_t>(n_max - 1)] - r[static_cast<size_t>(np - 1)] >= eps) {
                u[static_cast<size_t>(n - 1)] = 1;
                break;
            }
        }
    }
    return u;
}

TEST(Uncertainty, ApproxRewardExamples) {
    std::vector<double> onehot{0, 0, 1, 0};
    std::vector<double> q{-1, 0.5, 0.3, -1};
    EXPECT_DOUBLE_EQ(approx_reward(onehot, q), 0.3);
    EXPECT_DOUBLE_EQ(approx_reward({0.5, 0.5}, {1.0, -1.0}), 0.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pi(5), qf(5);
        double sum = 0.0;
        for (auto& x : pi) {
            x = std::abs(uni(rng));
            sum += x;
        }
        for (auto& x : pi) x /= sum;
        for (auto& x : qf) x = uni(rng);
        double dot = 0.0;
        for (int i = 0; i < 5; ++i)
            dot += pi[static_cast<size_t>(i)] * qf[static_cast<size_t>(i)];
        EXPECT_NEAR(approx_reward(pi, qf), dot, 1e-12);
    }
    EXPECT_THROW(approx_reward({0.5, 0.5}, {1.0}), std::invalid_argument);
}

TEST(Uncertainty, StableBestActionMeansCertainFromTheStart) {
    SearchTrace t;
    t.root = GameState(3);
    t.root_prior.assign(9, 0.0);
    t.root_prior[2] = 1.0;
    for (int i = 0; i < 63; ++i) t.steps.emplace_back(2, 0.4);
    UncertaintyLabel label = labels_from_trace(t, 64, 0.05);
    EXPECT_EQ(label.m, 1);
    for (uint8_t u : label.u_series) EXPECT_EQ(u, 0);
}

TEST(Uncertainty, EpsilonWiderThanValueRangeNeverUncertain) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        SearchTrace t = random_trace(4, 100, rng);
        UncertaintyLabel label = labels_from_trace(t, 100, 2.1);
        EXPECT_EQ(label.m, 1);
        for (uint8_t u : label.u_series) EXPECT_EQ(u, 0);
    }
}

TEST(Uncertainty, HandBuiltSwitchProducesExactBoundary) {
    // Best action is 0 except at n = 7 where action 1 leads (counts 2,3,1).
    SearchTrace t;
    t.root = GameState(3);
    t.root_prior.assign(9, 0.01);
    t.root_prior[0] = 0.92;
    const int plan[] = {0, 0, 2, 1, 1, 1, 0, 0, 0, 0, 0};
    const double vals[] = {0.5, 0.3, 0.0};
    for (int a : plan) t.steps.emplace_back(static_cast<int16_t>(a), vals[a]);
    int n_max = 12;
    UncertaintyLabel label = labels_from_trace(t, n_max, 0.1);
    // R(7) = q_final(1) = 0.3, R elsewhere = q_final(0) = 0.5; deficit 0.2.
    for (int n = 1; n <= 7; ++n) EXPECT_EQ(label.u_series[static_cast<size_t>(n - 1)], 1) << n;
    for (int n = 8; n <= n_max; ++n)
        EXPECT_EQ(label.u_series[static_cast<size_t>(n - 1)], 0) << n;
    EXPECT_EQ(label.m, 8);
    EXPECT_DOUBLE_EQ(label.r_series[6], 0.3);
    EXPECT_DOUBLE_EQ(label.r_series[7], 0.5);
    EXPECT_EQ(brute_force_u(t, n_max, 0.1), label.u_series);
}

TEST(Uncertainty, BackwardPassEqualsBruteForce) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        int n_max = 2 + static_cast<int>(rng() % 255);
        SearchTrace t = random_trace(5, n_max, rng);
        double eps = 0.01 + static_cast<double>(rng() % 100) / 250.0;
        UncertaintyLabel label = labels_from_trace(t, n_max, eps);
        EXPECT_EQ(brute_force_u(t, n_max, eps), label.u_series);
        // Non-increasing series, certain at N_max, m consistent.
        for (int n = 1; n < n_max; ++n)
            EXPECT_GE(label.u_series[static_cast<size_t>(n - 1)],
                      label.u_series[static_cast<size_t>(n)]);
        EXPECT_EQ(label.u_series.back(), 0);
        EXPECT_GE(label.m, 1);
        EXPECT_LE(label.m, n_max);
        for (int n = 1; n < label.m; ++n)
            EXPECT_EQ(label.u_series[static_cast<size_t>(n - 1)], 1);
        EXPECT_EQ(label.u_series[static_cast<size_t>(label.m - 1)], 0);
    }
}

TEST(Uncertainty, RealSearchTraceLabels) {
    class HashEval : public Evaluator {
    public:
        Evaluation evaluate(const GameState& s) override {
            Evaluation e;
            e.policy.resize(static_cast<size_t>(s.num_cells()));
            for (size_t i = 0; i < e.policy.size(); ++i)
                e.policy[i] = 1.0 + static_cast<double>((s.hash() + i * 2654435761u) % 97);
            e.value = static_cast<double>(s.hash() % 1999) / 999.0 - 1.0;
            return e;
        }
    };
    HashEval eval;
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        GameState pos(5);
        for (int i = 0; i < static_cast<int>(rng() % 8); ++i) {
            auto moves = pos.legal_moves();
            if (moves.empty()) break;
            pos = pos.play(moves[rng() % moves.size()]);
        }
        if (pos.is_terminal()) continue;
        SearchTrace t = search(pos, 256, eval, {}, rng());
        UncertaintyLabel label = labels_from_trace(t, 256, 0.05);
        EXPECT_EQ(brute_force_u(t, 256, 0.05), label.u_series);
        double polsum = std::accumulate(label.final_policy.begin(), label.final_policy.end(), 0.0);
        EXPECT_NEAR(polsum, 1.0, 1e-9);
        auto snap = root_snapshot(t, 256);
        for (size_t a = 0; a < label.final_q.size(); ++a) {
            if (snap.counts[a] == 0) {
                EXPECT_DOUBLE_EQ(label.final_q[a], -1.0);
            }
        }
    }
}

TEST(Uncertainty, CalibratedUncertaintyExamples) {
    EXPECT_NEAR(calibrated_uncertainty({0.99, 0.01}, 1.0), 0.01, 1e-15);
    for (double tau : {0.1, 0.5, 1.0, 3.0, 100.0})
        EXPECT_NEAR(calibrated_uncertainty({0.5, 0.5}, tau), 0.5, 1e-12);
    EXPECT_NEAR(calibrated_uncertainty({0.8, 0.2}, 0.5), 1.0 - 0.64 / 0.68, 1e-12);

    // tau -> infinity: u -> 1 - 1/|A| for full-support priors.
    std::mt19937_64 rng(5);
    for (int n : {2, 5, 25}) {
        std::vector<double> p(static_cast<size_t>(n));
        double sum = 0.0;
        for (auto& x : p) {
            x = static_cast<double>(rng() % 999 + 1);
            sum += x;
        }
        for (auto& x : p) x /= sum;
        EXPECT_NEAR(calibrated_uncertainty(p, 1e6), 1.0 - 1.0 / n, 1e-3);
    }

    // tau -> 0: certainty when the max is unique.
    EXPECT_NEAR(calibrated_uncertainty({0.6, 0.4}, 1e-3), 0.0, 1e-12);

    // Monotone in tau for two actions.
    double prev = -1.0;
    for (double tau = 0.05; tau <= 20.0; tau *= 1.5) {
        double u = calibrated_uncertainty({0.7, 0.3}, tau);
        EXPECT_GT(u, prev);
        prev = u;
    }

    EXPECT_DOUBLE_EQ(calibrated_uncertainty({1.0}, 2.0), 0.0);
    EXPECT_THROW(calibrated_uncertainty({0.5, 0.5}, 0.0), std::invalid_argument);
    EXPECT_THROW(calibrated_uncertainty({0.5, 0.5}, -1.0), std::invalid_argument);
    EXPECT_THROW(calibrated_uncertainty({0.0, 0.0}, 1.0), std::invalid_argument);
    EXPECT_THROW(calibrated_uncertainty({-0.1, 1.1}, 1.0), std::invalid_argument);
}

TEST(Uncertainty, ExpectedCostExamples) {
    auto dist = MDistribution::from_samples({1, 1, 1, 200, 400}, 400);
    for (int n : {1, 2, 100, 400})
        EXPECT_DOUBLE_EQ(expected_cost(0.0, n, 400, dist), 400.0);
    EXPECT_NEAR(expected_cost(1.0, 2, 400, dist), 161.2, 1e-9);

    auto all_low = MDistribution::from_samples({1, 1, 1}, 10);
    EXPECT_DOUBLE_EQ(expected_cost(1.0, 2, 10, all_low), 2.0);  // p(M<2) = 1

    EXPECT_THROW(expected_cost(1.5, 2, 400, dist), std::invalid_argument);
    EXPECT_THROW(expected_cost(0.5, 0, 400, dist), std::out_of_range);
    EXPECT_THROW(expected_cost(0.5, 401, 400, dist), std::out_of_range);
}

TEST(Uncertainty, ChooseCheckpointExamples) {
    auto all_one = choose_checkpoint(std::vector<int>(50, 1), 400);
    EXPECT_EQ(all_one.n_star, 2);
    EXPECT_DOUBLE_EQ(all_one.f_values[0], 400.0);  // p(M<1) = 0
    EXPECT_DOUBLE_EQ(all_one.f_values[1], 2.0);

    auto all_max = choose_checkpoint(std::vector<int>(50, 400), 400);
    EXPECT_EQ(all_max.n_star, 1);
    for (double f : all_max.f_values) EXPECT_DOUBLE_EQ(f, 400.0);

    EXPECT_THROW(choose_checkpoint({}, 400), std::invalid_argument);
    EXPECT_THROW(choose_checkpoint({0}, 400), std::invalid_argument);
    EXPECT_THROW(choose_checkpoint({401}, 400), std::invalid_argument);
}

TEST(Uncertainty, AlphaInvarianceOfMinimizerSets) {
    std::mt19937_64 rng(6);
    const int n_max = 64;
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<int> samples;
        int count = 5 + static_cast<int>(rng() % 200);
        for (int i = 0; i < count; ++i) {
            // Mix point masses and spread so ties happen sometimes.
            if (rng() % 3 == 0) {
                samples.push_back(1);
            } else {
                samples.push_back(1 + static_cast<int>(rng() % n_max));
            }
        }
        auto dist = MDistribution::from_samples(samples, n_max);
        std::set<int> reference;
        for (int k = 1; k <= 4; ++k) {
            std::set<int> argmins;
            int64_t best = std::numeric_limits<int64_t>::max();
            for (int n = 1; n <= n_max; ++n) {
                int64_t key = cost_key(k, 4, n, n_max, dist);
                if (key < best) {
                    best = key;
                    argmins.clear();
                }
                if (key == best) argmins.insert(n);
            }
            if (k == 1) {
                reference = argmins;
            } else {
                EXPECT_EQ(argmins, reference) << "alpha = " << k << "/4";
            }
        }
        // f(alpha, n) never exceeds N_max, and alpha = 0 is flat.
        for (int n = 1; n <= n_max; ++n) {
            for (double alpha : {0.0, 0.25, 0.5, 1.0})
                EXPECT_LE(expected_cost(alpha, n, n_max, dist), n_max + 1e-12);
            EXPECT_DOUBLE_EQ(expected_cost(0.0, n, n_max, dist), n_max);
        }
        // choose_checkpoint returns the smallest element of the minimizer set.
        auto choice = choose_checkpoint(samples, n_max);
        EXPECT_EQ(choice.n_star, *reference.begin());
    }
}

}  // namespace
