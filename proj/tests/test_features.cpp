#include "dsmcts/features.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace dsmcts;

namespace {

GameState random_position(int size, int plies, std::mt19937_64& rng) {
    GameState s(size);
    for (int i = 0; i < plies; ++i) {
        auto moves = s.legal_moves();
        if (moves.empty()) break;
        s = s.play(moves[rng() % moves.size()]);
    }
    return s;
}

TEST(StateFeatures, EmptyBoard) {
    Tensor t = state_features(GameState(5));
    size_t plane = 25;
    for (size_t i = 0; i < plane; ++i) {
        EXPECT_EQ(t.data[i], 0.0);
        EXPECT_EQ(t.data[plane + i], 0.0);
        EXPECT_EQ(t.data[2 * plane + i], 1.0);
        EXPECT_EQ(t.data[3 * plane + i], 1.0);
    }
}

TEST(StateFeatures, PerspectiveFlipsWithSideToMove) {
    GameState s = GameState(5).play(parse_move("c2", 5).value());
    ASSERT_EQ(s.to_move(), Player::White);
    Tensor t = state_features(s);
    size_t plane = 25;
    size_t c2 = static_cast<size_t>(move_index(parse_move("c2", 5).value(), 5));
    for (size_t i = 0; i < plane; ++i) {
        EXPECT_EQ(t.data[i], 0.0) << "white owns nothing yet";
        EXPECT_EQ(t.data[plane + i], i == c2 ? 1.0 : 0.0);
    }
    EXPECT_EQ(t.data[2 * plane + c2], 0.0);
}

TEST(StateFeatures, LegalMaskMatchesMoveGenerator) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        int size = 3 + static_cast<int>(rng() % 3);
        GameState s = random_position(size, static_cast<int>(rng() % (size * size)), rng);
        Tensor t = state_features(s);
        size_t plane = static_cast<size_t>(s.num_cells());
        std::vector<double> mask(plane, 0.0);
        for (Move m : s.legal_moves()) mask[static_cast<size_t>(move_index(m, size))] = 1.0;
        for (size_t i = 0; i < plane; ++i) {
            EXPECT_EQ(t.data[2 * plane + i], mask[i]);
            EXPECT_TRUE(t.data[i] == 0.0 || t.data[i] == 1.0);
            EXPECT_TRUE(t.data[plane + i] == 0.0 || t.data[plane + i] == 1.0);
            EXPECT_EQ(t.data[i] * t.data[plane + i], 0.0) << "planes overlap";
        }
    }
}

// Replays a trace keeping every backed-up value per action, then builds
// each channel from those lists. Slow but direct.
Tensor snapshot_oracle(const SearchTrace& trace, int n) {
    size_t cells = static_cast<size_t>(trace.num_actions());
    int half = n / 2;
    std::vector<std::vector<double>> vals(cells), wvals(cells);
    std::vector<int> cnt_half(cells, 0);
    for (int i = 2; i <= n; ++i) {
        auto [a, v] = trace.steps[static_cast<size_t>(i - 2)];
        vals[static_cast<size_t>(a)].push_back(v);
        if (i <= half) ++cnt_half[static_cast<size_t>(a)];
        if (i > half) wvals[static_cast<size_t>(a)].push_back(v);
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v) {
        double m = mean_of(v);
        double ss = 0.0;
        for (double x : v) ss = std::fma(x - m, x - m, ss);
        return std::sqrt(ss / static_cast<double>(v.size()));
    };
    int sz = trace.root.size();
    Tensor t = Tensor::zeros({kMctsChannels, sz, sz});
    double* d = t.data.data();
    for (size_t a = 0; a < cells; ++a) {
        double pi_n = static_cast<double>(vals[a].size()) / (n - 1);
        double pi_h;
        if (half >= 2) {
            pi_h = static_cast<double>(cnt_half[a]) / (half - 1);
        } else {
            pi_h = a == static_cast<size_t>(argmax_lowest(trace.root_prior)) ? 1.0 : 0.0;
        }
        d[0 * cells + a] = trace.root_prior[a];
        d[1 * cells + a] = pi_n;
        d[2 * cells + a] = vals[a].empty() ? -1.0 : mean_of(vals[a]);
        d[3 * cells + a] = vals[a].empty() ? 1.0 : std_of(vals[a]);
        d[4 * cells + a] = 2.0 * pi_n - pi_h;
        d[5 * cells + a] = wvals[a].empty() ? -1.0 : mean_of(wvals[a]);
        d[6 * cells + a] = wvals[a].empty() ? 1.0 : std_of(wvals[a]);
    }
    return t;
}

SearchTrace searched_trace(int sims, uint64_t seed) {
    std::mt19937_64 rng(seed);
    UniformEvaluator eval;
    GameState pos = random_position(5, static_cast<int>(rng() % 10), rng);
    while (pos.is_terminal()) pos = random_position(5, 4, rng);
    SearchParams params;
    params.dirichlet_noise = true;
    return search(pos, sims, eval, params, rng());
}

TEST(MctsFeatures, ChannelInvariantsOnRealSearches) {
    for (uint64_t seed = 0; seed < 12; ++seed) {
        SearchTrace trace = searched_trace(128, seed);
        for (int n : {2, 4, 16, 63, 128}) {
            Tensor t = mcts_features(trace, n);
            size_t cells = 25;
            const double* d = t.data.data();
            double s1 = 0.0, s4 = 0.0;
            RootSnapshot snap = root_snapshot(trace, n);
            for (size_t a = 0; a < cells; ++a) {
                s1 += d[1 * cells + a];
                s4 += d[4 * cells + a];
                EXPECT_GE(d[2 * cells + a], -1.0);
                EXPECT_LE(d[2 * cells + a], 1.0);
                EXPECT_GE(d[3 * cells + a], 0.0);
                EXPECT_LE(d[3 * cells + a], 1.0);
                if (snap.counts[a] == 0) {
                    EXPECT_EQ(d[2 * cells + a], -1.0);
                    EXPECT_EQ(d[3 * cells + a], 1.0);
                    EXPECT_EQ(d[1 * cells + a], 0.0);
                }
                EXPECT_EQ(d[0 * cells + a], trace.root_prior[a]);
            }
            EXPECT_NEAR(s1, 1.0, 1e-9);
            EXPECT_NEAR(s4, 1.0, 1e-9);
        }
    }
}

TEST(MctsFeatures, MatchesSnapshotOracleExactly) {
    for (uint64_t seed = 100; seed < 110; ++seed) {
        SearchTrace trace = searched_trace(200, seed);
        for (int n : {2, 3, 10, 101, 200}) {
            Tensor mine = mcts_features(trace, n);
            Tensor want = snapshot_oracle(trace, n);
            for (size_t i = 0; i < mine.data.size(); ++i)
                EXPECT_EQ(mine.data[i], want.data[i]) << "n=" << n << " flat=" << i;
        }
    }
}

TEST(MctsFeatures, StdAgreesWithTwoPassOracle) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    SearchTrace t;
    t.root = GameState(3);
    t.root_prior.assign(9, 1.0 / 9.0);
    for (int i = 0; i < 399; ++i)
        t.steps.emplace_back(static_cast<int16_t>(rng() % 9), uni(rng));
    Tensor feat = mcts_features(t, 400);
    for (size_t a = 0; a < 9; ++a) {
        std::vector<double> vs;
        for (auto [act, v] : t.steps)
            if (static_cast<size_t>(act) == a) vs.push_back(v);
        if (vs.empty()) continue;
        double mean = std::accumulate(vs.begin(), vs.end(), 0.0) / vs.size();
        double ss = 0.0;
        for (double v : vs) ss += (v - mean) * (v - mean);
        EXPECT_NEAR(feat.data[3 * 9 + a], std::sqrt(ss / vs.size()), 1e-12);
    }
}

TEST(MctsFeatures, SingleVisitGivesZeroStd) {
    SearchTrace t;
    t.root = GameState(3);
    t.root_prior.assign(9, 1.0 / 9.0);
    t.steps.emplace_back(4, 0.37);
    Tensor feat = mcts_features(t, 2);
    EXPECT_EQ(feat.data[3 * 9 + 4], 0.0);
    EXPECT_EQ(feat.data[6 * 9 + 4], 0.0);
    EXPECT_EQ(feat.data[2 * 9 + 4], 0.37);
    EXPECT_EQ(feat.data[5 * 9 + 4], 0.37);
}

TEST(MctsFeatures, CarriesNoEncodingOfSimulationCount) {
    // Two traces whose aggregate statistics coincide even though one ran
    // 9 simulations and the other 17.
    auto build = [](std::vector<int> plan) {
        SearchTrace t;
        t.root = GameState(5);
        t.root_prior.assign(25, 0.0);
        t.root_prior[0] = 0.6;
        t.root_prior[1] = 0.4;
        for (int a : plan) t.steps.emplace_back(static_cast<int16_t>(a), a == 0 ? 0.5 : -0.25);
        return t;
    };
    SearchTrace shorter = build({0, 0, 0, 0, 0, 0, 1, 1});
    SearchTrace longer = build({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1});
    Tensor a = mcts_features(shorter, 9);
    Tensor b = mcts_features(longer, 17);
    ASSERT_EQ(a.data.size(), b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]) << i;
    // Spot-check the hand-computed values: 6/8 = 12/16 visits on action 0.
    EXPECT_EQ(a.data[1 * 25 + 0], 0.75);
    EXPECT_EQ(a.data[4 * 25 + 0], 0.5);  // 2 * 0.75 - 1 (first half is pure action 0)
    EXPECT_EQ(a.data[2 * 25 + 1], -0.25);
}

TEST(MctsFeatures, RejectsOutOfRangeN) {
    SearchTrace t = searched_trace(16, 42);
    EXPECT_THROW(mcts_features(t, 0), std::out_of_range);
    EXPECT_THROW(mcts_features(t, 1), std::out_of_range);
    EXPECT_THROW(mcts_features(t, 17), std::out_of_range);
    (void)mcts_features(t, 16);
    (void)mcts_features(t, 2);
}

TEST(NetEvaluator, MatchesDirectForwardAndCachesTransparently) {
    NetConfig cfg;
    cfg.board_size = 5;
    Network net(cfg);
    net.init_weights(99);
    NetEvaluator cached(net);
    NetEvaluator uncached(net, 0);
    Network::Workspace ws = net.make_workspace();
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        GameState s = random_position(5, static_cast<int>(rng() % 12), rng);
        Evaluation a = cached.evaluate(s);
        Evaluation b = cached.evaluate(s);  // cache hit
        Evaluation c = uncached.evaluate(s);
        Tensor feat = state_features(s);
        NetOutput out = net.forward(feat.data.data(), nullptr, ws, FeatureDrop::kBoth);
        EXPECT_EQ(a.value, out.v);
        EXPECT_EQ(a.policy, out.p);
        EXPECT_EQ(b.policy, a.policy);
        EXPECT_EQ(b.value, a.value);
        EXPECT_EQ(c.policy, a.policy);
        EXPECT_EQ(c.value, a.value);
        double sum = std::accumulate(a.policy.begin(), a.policy.end(), 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    EXPECT_GT(cached.cache_size(), 0u);
    EXPECT_EQ(uncached.cache_size(), 0u);
}

TEST(NetEvaluator, RejectsTreeFeatureNetworks) {
    NetConfig cfg;
    cfg.board_size = 5;
    cfg.mcts_channels = kMctsChannels;
    Network net(cfg);
    net.init_weights(1);
    EXPECT_THROW(NetEvaluator ev(net), std::invalid_argument);
}

TEST(NetEvaluator, DrivesSearchDeterministically) {
    NetConfig cfg;
    cfg.board_size = 5;
    Network net(cfg);
    net.init_weights(7);
    NetEvaluator ev1(net), ev2(net, 0);
    SearchParams params;
    params.dirichlet_noise = true;
    GameState root(5);
    SearchTrace a = search(root, 100, ev1, params, 5);
    SearchTrace b = search(root, 100, ev2, params, 5);
    EXPECT_EQ(a.steps, b.steps);
    EXPECT_EQ(a.root_prior, b.root_prior);
}

}  // namespace
