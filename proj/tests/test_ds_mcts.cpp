#include "dsmcts/ds_mcts.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

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

Network make_state_net(int board, uint64_t seed) {
    NetConfig cfg;
    cfg.board_size = board;
    cfg.mcts_channels = 0;
    cfg.blocks = 1;
    cfg.filters = 8;
    cfg.head_hidden = 8;
    Network net(cfg);
    net.init_weights(seed);
    return net;
}

Network make_tree_net(int board, uint64_t seed) {
    NetConfig cfg;
    cfg.board_size = board;
    cfg.mcts_channels = kMctsChannels;
    cfg.blocks = 1;
    cfg.filters = 8;
    cfg.head_hidden = 8;
    Network net(cfg);
    net.init_weights(seed);
    return net;
}

TEST(DsConfig, ValidationCatchesBadShapes) {
    DSConfig good;
    good.n_max = 32;
    good.checkpoints = {0, 4, 8};
    good.thresholds = {0.1, 0.1, 0.1};
    EXPECT_NO_THROW(validate_ds_config(good));

    DSConfig c = good;
    c.checkpoints = {4, 8};
    c.thresholds = {0.1, 0.1};
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.checkpoints = {0, 8, 8};
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.checkpoints = {0, 4, 64};
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.thresholds = {0.1, 0.1};
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.thresholds = {0.1, -0.1, 0.1};
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.thresholds = {0.1, 1.5, 0.1};  // above 1 forces a stop; allowed
    EXPECT_NO_THROW(validate_ds_config(c));

    c = good;
    c.mode = StopMode::kCalibrated;
    c.tau = 0.0;
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);

    c = good;
    c.n_max = 0;
    EXPECT_THROW(validate_ds_config(c), std::invalid_argument);
}

TEST(DsConfig, ParsesKeyValueTextAndRoundTrips) {
    std::istringstream in(
        "# stopping schedule\n"
        "n_max = 400\n"
        "checkpoints=0,50,100,200\n"
        "thresholds = 0.02,0.1,0.1,0.15\n"
        "tau=0.5\n"
        "mode=calibrated  # prior entropy gate\n");
    DSConfig cfg = parse_ds_config(in);
    EXPECT_EQ(cfg.n_max, 400);
    EXPECT_EQ(cfg.checkpoints, (std::vector<int>{0, 50, 100, 200}));
    EXPECT_EQ(cfg.thresholds, (std::vector<double>{0.02, 0.1, 0.1, 0.15}));
    EXPECT_DOUBLE_EQ(cfg.tau, 0.5);
    EXPECT_EQ(cfg.mode, StopMode::kCalibrated);

    std::istringstream again(ds_config_text(cfg));
    DSConfig back = parse_ds_config(again);
    EXPECT_EQ(back.checkpoints, cfg.checkpoints);
    EXPECT_EQ(back.thresholds, cfg.thresholds);
    EXPECT_EQ(back.mode, cfg.mode);

    cfg.thresholds = {0.0, 1.0 / 3.0, std::nextafter(0.5, 1.0), 0.7300000001};
    std::istringstream exact(ds_config_text(cfg));
    EXPECT_EQ(parse_ds_config(exact).thresholds, cfg.thresholds);

    std::istringstream junk("n_max=400\nwhatever=3\n");
    EXPECT_THROW(parse_ds_config(junk), std::invalid_argument);
    std::istringstream bad_value("n_max=four hundred\n");
    EXPECT_THROW(parse_ds_config(bad_value), std::invalid_argument);
    std::istringstream bad_shape("checkpoints=0,10\nthresholds=0.1\n");
    EXPECT_THROW(parse_ds_config(bad_shape), std::invalid_argument);
    std::istringstream bad_mode("mode=entropy\n");
    EXPECT_THROW(parse_ds_config(bad_mode), std::invalid_argument);
}

TEST(DsConfig, DoublingCheckpointsStopBelowBudget) {
    EXPECT_EQ(doubling_checkpoints(50, 400), (std::vector<int>{0, 50, 100, 200}));
    EXPECT_EQ(doubling_checkpoints(100, 400), (std::vector<int>{0, 100, 200}));
    EXPECT_EQ(doubling_checkpoints(3, 10), (std::vector<int>{0, 3, 6}));
    EXPECT_THROW(doubling_checkpoints(1, 400), std::invalid_argument);
    EXPECT_THROW(doubling_checkpoints(400, 400), std::invalid_argument);
}

TEST(DsSearch, ZeroThresholdsMatchPlainSearchBitForBit) {
    Network pv_net = make_state_net(5, 21);
    Network tree_net = make_tree_net(5, 22);
    NetEvaluator pv(pv_net);

    DSConfig cfg;
    cfg.n_max = 24;
    cfg.checkpoints = {0, 2, 4, 8, 16};
    cfg.thresholds = {0.0, 0.0, 0.0, 0.0, 0.0};

    std::mt19937_64 rng(7);
    int compared = 0;
    for (int trial = 0; trial < 12; ++trial) {
        GameState pos = random_position(5, static_cast<int>(rng() % 10), rng);
        if (pos.is_terminal()) continue;
        uint64_t seed = 1000 + static_cast<uint64_t>(trial);
        DSResult ds = ds_search(pos, cfg, pv, &pv_net, &tree_net, seed);
        SearchTrace plain = search(pos, cfg.n_max, pv, cfg.search, seed);

        EXPECT_FALSE(ds.decision.stopped_early);
        EXPECT_EQ(ds.decision.rule, "budget");
        EXPECT_EQ(ds.decision.sims_used, cfg.n_max);
        ASSERT_EQ(ds.trace.steps.size(), plain.steps.size());
        EXPECT_EQ(ds.trace.root_prior, plain.root_prior);
        for (size_t i = 0; i < plain.steps.size(); ++i) {
            EXPECT_EQ(ds.trace.steps[i].first, plain.steps[i].first);
            EXPECT_EQ(ds.trace.steps[i].second, plain.steps[i].second);
        }
        EXPECT_EQ(ds.action, best_action(plain, cfg.n_max));
        ++compared;
    }
    EXPECT_GE(compared, 8);
}

TEST(DsSearch, GateAnswersFromPriorWithoutSimulating) {
    Network pv_net = make_state_net(5, 31);
    NetEvaluator pv(pv_net);
    GameState pos = GameState(5).play({2, 2}).play({0, 1});

    DSConfig cfg;
    cfg.n_max = 50;
    cfg.checkpoints = {0};
    cfg.thresholds = {1.5};  // sigmoid output is below 1, so this always stops
    DSResult r = ds_search(pos, cfg, pv, &pv_net, nullptr, 3);

    EXPECT_TRUE(r.decision.stopped_early);
    EXPECT_EQ(r.decision.sims_used, 0);
    EXPECT_EQ(r.decision.rule, "state-un");
    EXPECT_TRUE(r.trace.steps.empty());
    EXPECT_TRUE(r.trace.root_prior.empty());

    std::vector<double> expect = masked_prior(pos, pv.evaluate(pos));
    ASSERT_EQ(r.policy.size(), expect.size());
    for (size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(r.policy[i], expect[i]);
    EXPECT_EQ(r.action, argmax_lowest(expect));

    cfg.mode = StopMode::kCalibrated;
    DSResult c = ds_search(pos, cfg, pv, nullptr, nullptr, 3);
    EXPECT_EQ(c.decision.rule, "calibrated");
    EXPECT_EQ(c.decision.sims_used, 0);
    EXPECT_EQ(c.action, r.action);
}

TEST(DsSearch, CalibratedGateComparesStrictly) {
    UniformEvaluator pv;
    GameState pos(3);  // 9 legal moves, uniform prior
    double u0 = calibrated_uncertainty(masked_prior(pos, pv.evaluate(pos)), 1.0);
    EXPECT_NEAR(u0, 1.0 - 1.0 / 9.0, 1e-12);

    DSConfig cfg;
    cfg.n_max = 8;
    cfg.mode = StopMode::kCalibrated;
    cfg.checkpoints = {0};

    cfg.thresholds = {u0};  // u < thr is strict: equal value keeps searching
    DSResult keep = ds_search(pos, cfg, pv, nullptr, nullptr, 5);
    EXPECT_FALSE(keep.decision.stopped_early);
    EXPECT_EQ(keep.decision.sims_used, 8);

    cfg.thresholds = {u0 + 1e-9};
    DSResult stop = ds_search(pos, cfg, pv, nullptr, nullptr, 5);
    EXPECT_TRUE(stop.decision.stopped_early);
    EXPECT_EQ(stop.decision.sims_used, 0);
}

TEST(DsSearch, TreePredictorStopsExactlyAtItsCheckpoint) {
    Network pv_net = make_state_net(5, 41);
    Network tree_net = make_tree_net(5, 42);
    NetEvaluator pv(pv_net);
    GameState pos = GameState(5).play({1, 1});

    DSConfig cfg;
    cfg.n_max = 24;
    cfg.checkpoints = {0, 6, 12};
    cfg.thresholds = {0.0, 1.5, 1.5};
    uint64_t seed = 77;
    DSResult r = ds_search(pos, cfg, pv, &pv_net, &tree_net, seed);

    EXPECT_TRUE(r.decision.stopped_early);
    EXPECT_EQ(r.decision.sims_used, 6);
    EXPECT_EQ(r.decision.rule, "mcts-un@6");
    EXPECT_EQ(r.trace.simulations(), 6);

    // Identical dynamics up to the stop: the stopped trace is a prefix of
    // the plain search under the same seed.
    SearchTrace plain = search(pos, cfg.n_max, pv, cfg.search, seed);
    ASSERT_EQ(r.trace.steps.size(), 5u);
    for (size_t i = 0; i < r.trace.steps.size(); ++i) {
        EXPECT_EQ(r.trace.steps[i].first, plain.steps[i].first);
        EXPECT_EQ(r.trace.steps[i].second, plain.steps[i].second);
    }

    EXPECT_EQ(r.action, best_action(r.trace, 6));
    EXPECT_EQ(r.policy[static_cast<size_t>(r.action)], 1.0);
    double sum = 0.0;
    for (double p : r.policy) sum += p;
    EXPECT_DOUBLE_EQ(sum, 1.0);
}

SearchTrace synthetic_trace(const std::vector<std::pair<int, int>>& visit_plan) {
    SearchTrace t;
    t.root = GameState(5);
    t.root_prior.assign(25, 1.0 / 25.0);
    for (auto [action, count] : visit_plan)
        for (int i = 0; i < count; ++i)
            t.steps.emplace_back(static_cast<int16_t>(action), 0.0);
    return t;
}

TEST(StopRule, FiresOnlyWhenLeadExceedsRemainingBudget) {
    SearchTrace lead = synthetic_trace({{0, 10}, {1, 2}});  // counts (10, 2) at n = 13
    EXPECT_TRUE(stop_rule_STOP(lead, 13, 16));   // gap 8 > 3 remaining
    EXPECT_FALSE(stop_rule_STOP(lead, 13, 26));  // gap 8 <= 13 remaining
    EXPECT_FALSE(stop_rule_STOP(lead, 13, 13));  // budget exhausted, nothing to save

    SearchTrace tie = synthetic_trace({{0, 5}, {1, 5}});
    EXPECT_FALSE(stop_rule_STOP(tie, 11, 12));
    EXPECT_FALSE(stop_rule_STOP(tie, 11, 1000));

    EXPECT_THROW(stop_rule_STOP(lead, 14, 16), std::out_of_range);
}

TEST(StopRule, NeverFiresInTheFirstHalfOfTheBudget) {
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
    std::mt19937_64 rng(13);
    int n_max = 64;
    for (int trial = 0; trial < 6; ++trial) {
        GameState pos = random_position(5, static_cast<int>(rng() % 12), rng);
        if (pos.is_terminal()) continue;
        SearchTrace t = search(pos, n_max, eval, {}, rng());
        for (int n = 1; n < n_max; ++n) {
            if (stop_rule_STOP(t, n, n_max)) {
                EXPECT_GT(n, n_max / 2);
            }
        }
    }
}

TEST(StopRule, StopSearchEndsEarlyOnAForcedFavourite) {
    // One move holds almost all prior mass and every value is neutral, so
    // visits pile onto it and the lead outruns the remaining budget at the
    // first n with n - 1 > n_max - n.
    class Dominant : public Evaluator {
    public:
        Evaluation evaluate(const GameState& s) override {
            Evaluation e;
            e.policy.assign(static_cast<size_t>(s.num_cells()), 0.001);
            auto legal = s.legal_moves();
            e.policy[static_cast<size_t>(move_index(legal.front(), s.size()))] = 10.0;
            e.value = 0.0;
            return e;
        }
    };
    Dominant eval;
    GameState pos(5);
    int n_max = 64;
    BaselineResult r = stop_search(pos, n_max, eval, {}, 9);

    EXPECT_TRUE(r.decision.stopped_early);
    EXPECT_EQ(r.decision.rule, "STOP");
    EXPECT_EQ(r.decision.sims_used, 33);  // first n with n - 1 > 64 - n
    EXPECT_EQ(r.trace.simulations(), 33);
    EXPECT_EQ(r.action, move_index(pos.legal_moves().front(), 5));

    SearchTrace plain = search(pos, n_max, eval, {}, 9);
    for (size_t i = 0; i < r.trace.steps.size(); ++i) {
        EXPECT_EQ(r.trace.steps[i].first, plain.steps[i].first);
        EXPECT_EQ(r.trace.steps[i].second, plain.steps[i].second);
    }

    UniformEvaluator flat;
    BaselineResult full = stop_search(pos, 16, flat, {}, 9);
    EXPECT_EQ(full.decision.rule, full.decision.stopped_early ? "STOP" : "budget");
    EXPECT_LE(full.decision.sims_used, 16);
}

TEST(RandomStop, BudgetFollowsTheRequestedFraction) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(random_stop_budget(0.0, 50, 400, rng), 400);
        EXPECT_EQ(random_stop_budget(1.0, 50, 400, rng), 50);
    }
    int reduced = 0;
    int draws = 20000;
    for (int i = 0; i < draws; ++i)
        if (random_stop_budget(0.75, 50, 400, rng) == 50) ++reduced;
    EXPECT_NEAR(static_cast<double>(reduced) / draws, 0.75, 0.02);

    EXPECT_THROW(random_stop_budget(1.5, 50, 400, rng), std::invalid_argument);
    EXPECT_THROW(random_stop_budget(0.5, 500, 400, rng), std::invalid_argument);
}

std::vector<LabeledState> labeled_fixture(int n_max) {
    SelfplayConfig sp;
    sp.board_size = 4;
    sp.games = 3;
    sp.sims_per_move = 8;
    auto records = generate_selfplay(uniform_eval_factory(), sp, 91);
    return relabel(records, uniform_eval_factory(), n_max, 0.05, 2, 92);
}

TEST(ValidateThresholds, ZeroThresholdsNeverStopAnything) {
    auto holdout = labeled_fixture(32);
    Network state_net = make_state_net(4, 51);
    Network tree_net = make_tree_net(4, 52);

    DSConfig cfg;
    cfg.n_max = 32;
    cfg.checkpoints = {0, 4, 8};
    cfg.thresholds = {0.0, 0.0, 0.0};
    ThresholdReport rep = validate_thresholds(holdout, cfg, &state_net, &tree_net, nullptr, 2);

    ASSERT_EQ(rep.checkpoints.size(), 3u);
    for (const auto& cr : rep.checkpoints) {
        EXPECT_EQ(cr.stopped, 0u);
        EXPECT_DOUBLE_EQ(cr.recall, 1.0);
        EXPECT_DOUBLE_EQ(cr.false_stop_rate, 0.0);
    }
    EXPECT_DOUBLE_EQ(rep.projected_avg_sims, 32.0);
    EXPECT_EQ(rep.stop_histogram.back(), holdout.size());
}

TEST(ValidateThresholds, ForcedGateStopsEverything) {
    auto holdout = labeled_fixture(32);
    Network state_net = make_state_net(4, 61);

    DSConfig cfg;
    cfg.n_max = 32;
    cfg.checkpoints = {0};
    cfg.thresholds = {1.5};
    ThresholdReport rep = validate_thresholds(holdout, cfg, &state_net, nullptr, nullptr, 1);

    const auto& cr = rep.checkpoints.front();
    EXPECT_EQ(cr.stopped, holdout.size());
    size_t positives = 0;
    for (const auto& ls : holdout)
        if (ls.label.u_series.front() != 0) ++positives;
    EXPECT_EQ(cr.positives, positives);
    EXPECT_EQ(cr.stopped_positives, positives);
    if (positives > 0) {
        EXPECT_DOUBLE_EQ(cr.recall, 0.0);
    }
    EXPECT_DOUBLE_EQ(cr.false_stop_rate,
                     static_cast<double>(positives) / static_cast<double>(holdout.size()));
    EXPECT_DOUBLE_EQ(rep.projected_avg_sims, 0.0);
    EXPECT_EQ(rep.stop_histogram.front(), holdout.size());
}

TEST(ValidateThresholds, MatchesPerStateReplayAccounting) {
    auto holdout = labeled_fixture(32);
    Network state_net = make_state_net(4, 71);
    Network tree_net = make_tree_net(4, 72);

    DSConfig cfg;
    cfg.n_max = 32;
    cfg.checkpoints = {0, 4, 8, 16};
    cfg.thresholds = {0.45, 0.5, 0.5, 0.55};
    ThresholdReport rep = validate_thresholds(holdout, cfg, &state_net, &tree_net, nullptr, 3);
    ThresholdReport seq = validate_thresholds(holdout, cfg, &state_net, &tree_net, nullptr, 1);

    // Worker count must not change a single number.
    ASSERT_EQ(rep.checkpoints.size(), seq.checkpoints.size());
    for (size_t i = 0; i < rep.checkpoints.size(); ++i) {
        EXPECT_EQ(rep.checkpoints[i].stopped, seq.checkpoints[i].stopped);
        EXPECT_EQ(rep.checkpoints[i].stopped_positives, seq.checkpoints[i].stopped_positives);
    }
    EXPECT_EQ(rep.stop_histogram, seq.stop_histogram);
    EXPECT_DOUBLE_EQ(rep.projected_avg_sims, seq.projected_avg_sims);

    // Replay every state by hand through the same predictors.
    Network::Workspace sws = state_net.make_workspace();
    Network::Workspace tws = tree_net.make_workspace();
    std::vector<size_t> hist(cfg.checkpoints.size() + 1, 0);
    std::vector<size_t> stopped(cfg.checkpoints.size(), 0);
    std::vector<size_t> stopped_pos(cfg.checkpoints.size(), 0);
    double total = 0.0;
    for (const auto& ls : holdout) {
        Tensor sf = state_features(ls.state);
        bool done = false;
        for (size_t i = 0; i < cfg.checkpoints.size(); ++i) {
            double u;
            if (i == 0) {
                u = state_net.forward(sf.data.data(), nullptr, sws, FeatureDrop::kBoth).u;
            } else {
                Tensor tf = mcts_features(ls.trace, cfg.checkpoints[i]);
                u = tree_net.forward(sf.data.data(), tf.data.data(), tws, FeatureDrop::kBoth).u;
            }
            if (u < cfg.thresholds[i]) {
                int label_n = std::max(cfg.checkpoints[i], 1);
                ++stopped[i];
                if (ls.label.u_series[static_cast<size_t>(label_n - 1)] != 0) ++stopped_pos[i];
                if (!done) {
                    total += cfg.checkpoints[i];
                    ++hist[i];
                    done = true;
                }
            }
        }
        if (!done) {
            total += cfg.n_max;
            ++hist[cfg.checkpoints.size()];
        }
    }
    for (size_t i = 0; i < cfg.checkpoints.size(); ++i) {
        EXPECT_EQ(rep.checkpoints[i].stopped, stopped[i]);
        EXPECT_EQ(rep.checkpoints[i].stopped_positives, stopped_pos[i]);
    }
    EXPECT_EQ(rep.stop_histogram, hist);
    EXPECT_DOUBLE_EQ(rep.projected_avg_sims, total / static_cast<double>(holdout.size()));

    size_t stop_total = 0;
    for (size_t h : rep.stop_histogram) stop_total += h;
    EXPECT_EQ(stop_total, holdout.size());
}

// Holdout whose positivity at the gate is dictated directly: state i is
// positive at every checkpoint iff flags[i] is set.
std::vector<LabeledState> flagged_holdout(const std::vector<bool>& flags, int n_max) {
    std::vector<LabeledState> out;
    for (bool positive : flags) {
        LabeledState ls;
        ls.label.n_max = n_max;
        ls.label.u_series.assign(static_cast<size_t>(n_max), positive ? 1 : 0);
        ls.label.u_series.back() = 0;  // searching to the full budget always settles it
        out.push_back(std::move(ls));
    }
    return out;
}

TEST(ChooseThresholds, KeepsTheRequestedShareOfPositives) {
    DSConfig cfg;
    cfg.n_max = 32;
    cfg.checkpoints = {0};
    cfg.thresholds = {0.0};

    // Ten positives with scores 0.1..1.0 and eight negatives below them.
    std::vector<bool> flags;
    std::vector<std::vector<double>> scores(1);
    for (int i = 1; i <= 10; ++i) {
        flags.push_back(true);
        scores[0].push_back(static_cast<double>(i) / 10.0);
    }
    for (int i = 0; i < 8; ++i) {
        flags.push_back(false);
        scores[0].push_back(0.05);
    }
    auto holdout = flagged_holdout(flags, cfg.n_max);

    // 96% of ten positives allows zero losses: threshold lands on the
    // smallest positive score and no positive is stopped.
    auto thr = choose_thresholds(holdout, cfg, scores, 0.96);
    ASSERT_EQ(thr.size(), 1u);
    EXPECT_DOUBLE_EQ(thr[0], 0.1);
    size_t stopped_pos = 0, stopped_neg = 0;
    for (size_t s = 0; s < holdout.size(); ++s) {
        if (scores[0][s] < thr[0]) {
            if (flags[s]) {
                ++stopped_pos;
            } else {
                ++stopped_neg;
            }
        }
    }
    EXPECT_EQ(stopped_pos, 0u);
    EXPECT_EQ(stopped_neg, 8u);

    // Half recall tolerates five losses: the sixth-smallest positive
    // score carries the threshold.
    thr = choose_thresholds(holdout, cfg, scores, 0.5);
    EXPECT_DOUBLE_EQ(thr[0], 0.6);

    // No positives anywhere: everything may stop.
    auto all_neg = flagged_holdout(std::vector<bool>(4, false), cfg.n_max);
    std::vector<std::vector<double>> neg_scores{{0.3, 0.4, 0.5, 0.6}};
    thr = choose_thresholds(all_neg, cfg, neg_scores, 0.96);
    EXPECT_DOUBLE_EQ(thr[0], 1.0);

    EXPECT_THROW(choose_thresholds(holdout, cfg, scores, 0.0), std::invalid_argument);
    EXPECT_THROW(choose_thresholds(holdout, cfg, {}, 0.9), std::invalid_argument);
}

TEST(ChooseThresholds, ChosenThresholdsPassValidationRecall) {
    auto holdout = labeled_fixture(32);
    Network state_net = make_state_net(4, 101);
    Network tree_net = make_tree_net(4, 102);

    DSConfig cfg;
    cfg.n_max = 32;
    cfg.checkpoints = {0, 4, 8};
    cfg.thresholds = {0.0, 0.0, 0.0};
    auto scores = checkpoint_scores(holdout, cfg, &state_net, &tree_net, nullptr, 2);
    cfg.thresholds = choose_thresholds(holdout, cfg, scores, 0.9);

    ThresholdReport rep = validate_thresholds(holdout, cfg, &state_net, &tree_net, nullptr, 2);
    for (const auto& cr : rep.checkpoints) EXPECT_GE(cr.recall, 0.9);
}

TEST(ValidateThresholds, RejectsInconsistentInputs) {
    auto holdout = labeled_fixture(16);
    Network state_net = make_state_net(4, 81);

    DSConfig cfg;
    cfg.n_max = 32;  // labels were built with 16
    cfg.checkpoints = {0};
    cfg.thresholds = {0.5};
    EXPECT_THROW(validate_thresholds(holdout, cfg, &state_net, nullptr, nullptr, 1),
                 std::invalid_argument);

    cfg.n_max = 16;
    EXPECT_THROW(validate_thresholds({}, cfg, &state_net, nullptr, nullptr, 1),
                 std::invalid_argument);
    EXPECT_THROW(validate_thresholds(holdout, cfg, nullptr, nullptr, nullptr, 1),
                 std::invalid_argument);

    cfg.mode = StopMode::kCalibrated;
    EXPECT_THROW(validate_thresholds(holdout, cfg, nullptr, nullptr, nullptr, 1),
                 std::invalid_argument);
}

}  // namespace
