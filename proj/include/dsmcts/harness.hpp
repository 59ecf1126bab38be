#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsmcts/ds_mcts.hpp"
#include "dsmcts/mcts.hpp"
#include "dsmcts/selfplay.hpp"
#include "dsmcts/util.hpp"

namespace dsmcts {

struct MoveChoice {
    int action = 0;
    int sims_used = 0;
    std::string rule = "budget";
};

/** A move-producing player. One instance serves one worker thread. */
class Agent {
public:
    virtual ~Agent() = default;
    virtual MoveChoice choose(const GameState& state, uint64_t seed) = 0;
};

using AgentFactory = std::function<std::unique_ptr<Agent>()>;

/** Fixed-budget PUCT search. */
class SearchAgent : public Agent {
public:
    SearchAgent(std::unique_ptr<Evaluator> eval, int sims, SearchParams params = {})
        : eval_(std::move(eval)), sims_(sims), params_(params) {
        if (sims_ < 1) throw std::invalid_argument("need at least one simulation");
    }
    MoveChoice choose(const GameState& state, uint64_t seed) override {
        SearchTrace t = search(state, sims_, *eval_, params_, seed);
        return {best_action(t, sims_), sims_, "budget"};
    }

private:
    std::unique_ptr<Evaluator> eval_;
    int sims_;
    SearchParams params_;
};

/** Search that terminates early under the dynamic stopping schedule. */
class DsAgent : public Agent {
public:
    DsAgent(DSConfig cfg, std::unique_ptr<Evaluator> pv, const Network* state_un,
            const Network* mcts_un)
        : cfg_(std::move(cfg)), pv_(std::move(pv)), state_un_(state_un), mcts_un_(mcts_un) {
        validate_ds_config(cfg_);
    }
    MoveChoice choose(const GameState& state, uint64_t seed) override {
        DSResult r = ds_search(state, cfg_, *pv_, state_un_, mcts_un_, seed);
        return {r.action, r.decision.sims_used, r.decision.rule};
    }

private:
    DSConfig cfg_;
    std::unique_ptr<Evaluator> pv_;
    const Network* state_un_;
    const Network* mcts_un_;
};

/** Search that terminates once the visit-gap rule fires. */
class StopAgent : public Agent {
public:
    StopAgent(std::unique_ptr<Evaluator> eval, int n_max, SearchParams params = {})
        : eval_(std::move(eval)), n_max_(n_max), params_(params) {
        if (n_max_ < 1) throw std::invalid_argument("need at least one simulation");
    }
    MoveChoice choose(const GameState& state, uint64_t seed) override {
        BaselineResult r = stop_search(state, n_max_, *eval_, params_, seed);
        return {r.action, r.decision.sims_used, r.decision.rule};
    }

private:
    std::unique_ptr<Evaluator> eval_;
    int n_max_;
    SearchParams params_;
};

/** Search whose budget is cut to reduced_sims on a per-move coin flip. */
class RandomStopAgent : public Agent {
public:
    RandomStopAgent(std::unique_ptr<Evaluator> eval, double fraction, int reduced_sims, int n_max,
                    SearchParams params = {})
        : eval_(std::move(eval)),
          fraction_(fraction),
          reduced_(reduced_sims),
          n_max_(n_max),
          params_(params) {
        if (n_max_ < 1 || reduced_ < 1) throw std::invalid_argument("bad budgets");
        if (fraction_ < 0.0 || fraction_ > 1.0)
            throw std::invalid_argument("fraction must be in [0,1]");
    }
    MoveChoice choose(const GameState& state, uint64_t seed) override {
        std::mt19937_64 rng(derive_seed(seed, 0xb5));
        int budget = random_stop_budget(fraction_, reduced_, n_max_, rng);
        SearchTrace t = search(state, budget, *eval_, params_, seed);
        return {best_action(t, budget), budget, budget < n_max_ ? "random-stop" : "budget"};
    }

private:
    std::unique_ptr<Evaluator> eval_;
    double fraction_;
    int reduced_;
    int n_max_;
    SearchParams params_;
};

struct WilsonInterval {
    double lo = 0.0;
    double hi = 0.0;
};

/** 95% Wilson score interval for a binomial proportion. */
inline WilsonInterval wilson_95(size_t wins, size_t games) {
    if (games == 0) throw std::invalid_argument("no games");
    if (wins > games) throw std::invalid_argument("wins exceed games");
    const double z = 1.96;
    double n = static_cast<double>(games);
    double p = static_cast<double>(wins) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double centre = p + z2 / (2.0 * n);
    double rad = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, (centre - rad) / denom), std::min(1.0, (centre + rad) / denom)};
}

struct GameLogEntry {
    int game = 0;
    int ply = 0;
    int agent = 0;  // 0 = A, 1 = B, -1 = harness-played opening move
    Player color = Player::Black;
    Move move;
    int sims_used = 0;
    std::string rule;
};

struct GameSummary {
    bool a_black = false;
    bool a_won = false;
    int plies = 0;
    size_t a_sims = 0, b_sims = 0;
};

struct MatchResult {
    size_t games = 0;
    uint64_t seed = 0;
    size_t a_wins = 0, b_wins = 0;
    size_t a_black_games = 0, a_black_wins = 0, a_white_wins = 0;
    double a_avg_sims = 0.0, b_avg_sims = 0.0;
    std::map<int, size_t> a_sim_histogram, b_sim_histogram;
    WilsonInterval a_wilson;
    std::vector<GameSummary> per_game;
    std::vector<GameRecord> records;
    std::vector<GameLogEntry> log;
};

struct MatchConfig {
    int board_size = 5;
    int games = 2;
    bool swap_colors = true;
    // The harness plays this many uniformly random opening moves per game
    // so repeated games explore different positions. They count for
    // neither agent's simulation statistics.
    int opening_random_plies = 4;
    unsigned workers = 1;
};

inline double mean_from_histogram(const std::map<int, size_t>& hist) {
    double total = 0.0;
    size_t count = 0;
    for (auto [sims, c] : hist) {
        total += static_cast<double>(sims) * static_cast<double>(c);
        count += c;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

/**
 * Plays agent A against agent B. With swap_colors game k gives A black
 * exactly when k is even, so the color split is exact. Game k is seeded
 * from (seed, k) and games run independently across workers; reports are
 * merged in game order, so results never depend on the worker count.
 */
inline MatchResult play_match(const AgentFactory& make_a, const AgentFactory& make_b,
                              const MatchConfig& cfg, uint64_t seed) {
    if (cfg.games < 2) throw std::invalid_argument("need at least two games");
    if (cfg.swap_colors && cfg.games % 2 != 0)
        throw std::invalid_argument("color swapping needs an even game count");
    if (cfg.opening_random_plies < 0) throw std::invalid_argument("bad opening ply count");

    struct GameOutcome {
        GameRecord record;
        std::vector<GameLogEntry> log;
        GameSummary summary;
    };
    std::vector<GameOutcome> outcomes(static_cast<size_t>(cfg.games));

    unsigned workers = std::max(1u, cfg.workers);
    std::vector<std::unique_ptr<Agent>> agents_a(workers), agents_b(workers);
    parallel_for_indexed(outcomes.size(), workers, [&](size_t g, unsigned w) {
        if (!agents_a[w]) agents_a[w] = make_a();
        if (!agents_b[w]) agents_b[w] = make_b();
        GameOutcome& out = outcomes[g];
        out.summary.a_black = cfg.swap_colors ? g % 2 == 0 : true;
        uint64_t game_seed = derive_seed(seed, g);
        std::mt19937_64 opening_rng(derive_seed(game_seed, 0));

        GameState s(cfg.board_size);
        out.record.board_size = s.size();
        int ply = 0;
        while (!s.is_terminal()) {
            bool a_to_move = (s.to_move() == Player::Black) == out.summary.a_black;
            GameLogEntry e;
            e.game = static_cast<int>(g);
            e.ply = ply;
            e.color = s.to_move();
            Move mv;
            if (ply < cfg.opening_random_plies) {
                auto legal = s.legal_moves();
                mv = legal[opening_rng() % legal.size()];
                e.agent = -1;
                e.sims_used = 0;
                e.rule = "opening";
            } else {
                Agent& agent = a_to_move ? *agents_a[w] : *agents_b[w];
                MoveChoice mc =
                    agent.choose(s, derive_seed(game_seed, static_cast<size_t>(ply) + 1));
                mv = index_move(mc.action, s.size());
                e.agent = a_to_move ? 0 : 1;
                e.sims_used = mc.sims_used;
                e.rule = mc.rule;
                if (a_to_move) {
                    out.summary.a_sims += static_cast<size_t>(mc.sims_used);
                } else {
                    out.summary.b_sims += static_cast<size_t>(mc.sims_used);
                }
            }
            e.move = mv;
            out.log.push_back(std::move(e));
            out.record.moves.push_back(mv);
            s = s.play(mv);
            ++ply;
        }
        out.record.winner = s.winner();
        out.summary.plies = ply;
        out.summary.a_won = (out.record.winner == Player::Black) == out.summary.a_black;
    });

    MatchResult result;
    result.games = static_cast<size_t>(cfg.games);
    result.seed = seed;
    size_t a_sims = 0, b_sims = 0, a_moves = 0, b_moves = 0;
    for (auto& out : outcomes) {
        for (const auto& e : out.log) {
            if (e.agent == 0) {
                ++result.a_sim_histogram[e.sims_used];
                a_sims += static_cast<size_t>(e.sims_used);
                ++a_moves;
            } else if (e.agent == 1) {
                ++result.b_sim_histogram[e.sims_used];
                b_sims += static_cast<size_t>(e.sims_used);
                ++b_moves;
            }
        }
        if (out.summary.a_black) ++result.a_black_games;
        if (out.summary.a_won) {
            ++result.a_wins;
            if (out.summary.a_black) {
                ++result.a_black_wins;
            } else {
                ++result.a_white_wins;
            }
        } else {
            ++result.b_wins;
        }
        result.per_game.push_back(out.summary);
        result.records.push_back(std::move(out.record));
        result.log.insert(result.log.end(), out.log.begin(), out.log.end());
    }
    result.a_avg_sims = a_moves == 0 ? 0.0 : static_cast<double>(a_sims) / a_moves;
    result.b_avg_sims = b_moves == 0 ? 0.0 : static_cast<double>(b_sims) / b_moves;
    result.a_wilson = wilson_95(result.a_wins, result.games);
    return result;
}

inline MatchResult play_match(const AgentFactory& make_a, const AgentFactory& make_b, int games,
                              uint64_t seed, bool swap_colors) {
    MatchConfig cfg;
    cfg.games = games;
    cfg.swap_colors = swap_colors;
    return play_match(make_a, make_b, cfg, seed);
}

/** Mean simulations per move of agent A over the opponent's fixed budget. */
inline double avg_sim_ratio(const MatchResult& result, int opp_sim) {
    if (opp_sim <= 0) throw std::invalid_argument("opponent budget must be positive");
    return result.a_avg_sims / static_cast<double>(opp_sim);
}

inline void write_match_log(const MatchResult& result, const std::string& a_name,
                            const std::string& b_name, int board_size, std::ostream& out) {
    for (const auto& e : result.log) {
        out << "{\"game\":" << e.game << ",\"ply\":" << e.ply << ",\"agent\":\""
            << (e.agent == 0 ? a_name : e.agent == 1 ? b_name : "opening") << "\",\"color\":\""
            << (e.color == Player::Black ? "B" : "W") << "\",\"move\":\""
            << move_name(e.move, board_size) << "\",\"sims\":" << e.sims_used << ",\"rule\":\""
            << e.rule << "\"}\n";
    }
}

/** Per-game rows, a blank line, then key,value summary rows. */
inline std::string match_csv(const MatchResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "game,a_color,winner,plies,a_sims,b_sims\n";
    for (size_t g = 0; g < result.per_game.size(); ++g) {
        const GameSummary& s = result.per_game[g];
        out << g << "," << (s.a_black ? 'B' : 'W') << "," << (s.a_won ? 'A' : 'B') << ","
            << s.plies << "," << s.a_sims << "," << s.b_sims << "\n";
    }
    out << "\nmetric,value\n";
    out << "games," << result.games << "\n";
    out << "a_wins," << result.a_wins << "\n";
    out << "b_wins," << result.b_wins << "\n";
    out << "a_black_wins," << result.a_black_wins << "\n";
    out << "a_white_wins," << result.a_white_wins << "\n";
    out << "a_winrate," << static_cast<double>(result.a_wins) / static_cast<double>(result.games)
        << "\n";
    out << "wilson_lo," << result.a_wilson.lo << "\n";
    out << "wilson_hi," << result.a_wilson.hi << "\n";
    out << "a_avg_sims," << result.a_avg_sims << "\n";
    out << "b_avg_sims," << result.b_avg_sims << "\n";
    out << "seed," << result.seed << "\n";
    return out.str();
}

struct MscReport {
    std::vector<int> msc;         // ascending
    std::vector<double> percent;  // cumulative data share, reaches 100
    double mean_m = 0.0;
    double fraction_m1 = 0.0;
};

/** Distribution of the minimum simulation count that settles the move. */
inline MscReport msc_report(const std::vector<LabeledState>& labeled) {
    if (labeled.empty()) throw std::invalid_argument("no labeled states");
    MscReport rep;
    long long total = 0;
    size_t ones = 0;
    for (const auto& ls : labeled) {
        rep.msc.push_back(ls.label.m);
        total += ls.label.m;
        if (ls.label.m == 1) ++ones;
    }
    std::sort(rep.msc.begin(), rep.msc.end());
    size_t n = rep.msc.size();
    rep.percent.resize(n);
    for (size_t i = 0; i < n; ++i)
        rep.percent[i] = 100.0 * static_cast<double>(i + 1) / static_cast<double>(n);
    rep.mean_m = static_cast<double>(total) / static_cast<double>(n);
    rep.fraction_m1 = static_cast<double>(ones) / static_cast<double>(n);
    return rep;
}

inline std::string msc_csv(const MscReport& rep) {
    std::ostringstream out;
    out.precision(17);
    out << "norm_idx,msc\n";
    for (size_t i = 0; i < rep.msc.size(); ++i) out << rep.percent[i] << "," << rep.msc[i] << "\n";
    return out.str();
}

inline MscReport parse_msc_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("norm_idx,msc", 0) != 0)
        throw std::runtime_error("not an msc report");
    MscReport rep;
    long long total = 0;
    size_t ones = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("malformed msc row");
        rep.percent.push_back(std::stod(line.substr(0, comma)));
        int m = std::stoi(line.substr(comma + 1));
        rep.msc.push_back(m);
        total += m;
        if (m == 1) ++ones;
    }
    if (rep.msc.empty()) throw std::runtime_error("empty msc report");
    rep.mean_m = static_cast<double>(total) / static_cast<double>(rep.msc.size());
    rep.fraction_m1 = static_cast<double>(ones) / static_cast<double>(rep.msc.size());
    return rep;
}

}  // namespace dsmcts
