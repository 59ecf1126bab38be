#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsmcts/features.hpp"
#include "dsmcts/mcts.hpp"
#include "dsmcts/network.hpp"
#include "dsmcts/nogo.hpp"
#include "dsmcts/uncertainty.hpp"
#include "dsmcts/util.hpp"

namespace dsmcts {

/**
 * Builds one evaluator per worker thread; evaluators carry mutable
 * scratch (workspace, memo cache) so they cannot be shared.
 */
using EvalFactory = std::function<std::unique_ptr<Evaluator>()>;

inline EvalFactory uniform_eval_factory() {
    return [] { return std::make_unique<UniformEvaluator>(); };
}

inline EvalFactory net_eval_factory(const Network& net) {
    return [&net] { return std::make_unique<NetEvaluator>(net); };
}

struct GameRecord {
    int board_size = 5;
    std::vector<Move> moves;
    Player winner = Player::Black;
};

struct SelfplayConfig {
    SelfplayConfig() { search.dirichlet_noise = true; }

    int board_size = 5;
    int games = 2000;
    int sims_per_move = 50;
    // Moves are temperature-1 sampled for this share of size^2 plies,
    // then greedy; keeps openings diverse without randomizing endgames.
    double opening_fraction = 0.3;
    SearchParams search;
    unsigned workers = 1;
};

/** Samples an index from unnormalized non-negative weights. */
template <typename Rng>
int sample_weighted(const std::vector<double>& w, Rng& rng) {
    double total = 0.0;
    for (double x : w) {
        if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("bad sampling weight");
        total += x;
    }
    if (total <= 0.0) throw std::invalid_argument("no positive sampling weight");
    double r = canonical(rng) * total;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size() - 1);
}

inline std::vector<GameRecord> generate_selfplay(const EvalFactory& make_eval,
                                                 const SelfplayConfig& cfg, uint64_t seed) {
    if (cfg.games < 0 || cfg.sims_per_move < 1)
        throw std::invalid_argument("bad self-play configuration");
    std::vector<GameRecord> records(static_cast<size_t>(cfg.games));
    int opening_plies = static_cast<int>(
        std::lround(cfg.opening_fraction * cfg.board_size * cfg.board_size));
    unsigned workers = std::max(1u, cfg.workers);
    std::vector<std::unique_ptr<Evaluator>> evals(workers);
    parallel_for_indexed(records.size(), workers, [&](size_t g, unsigned w) {
        if (!evals[w]) evals[w] = make_eval();
        std::mt19937_64 rng(derive_seed(seed, g));
        GameState s(cfg.board_size);
        GameRecord rec;
        rec.board_size = cfg.board_size;
        while (!s.is_terminal()) {
            SearchTrace t = search(s, cfg.sims_per_move, *evals[w], cfg.search, rng());
            int a;
            if (s.ply() < opening_plies) {
                a = sample_weighted(root_policy(t, cfg.sims_per_move, 1.0), rng);
            } else {
                a = best_action(t, cfg.sims_per_move);
            }
            Move mv = index_move(a, cfg.board_size);
            rec.moves.push_back(mv);
            s = s.play(mv);
        }
        rec.winner = s.winner();
        records[g] = std::move(rec);
    });
    return records;
}

struct LabeledState {
    GameState state{5};
    UncertaintyLabel label;  // carries m, U-series, final policy/q, z
    SearchTrace trace;       // kept so tree features can be regenerated at any n
};

/**
 * Searches every non-terminal position of every record for n_max
 * simulations without noise and extracts uncertainty labels. The game
 * outcome z is stored from the perspective of the player to move.
 */
inline std::vector<LabeledState> relabel(const std::vector<GameRecord>& records,
                                         const EvalFactory& make_eval, int n_max, double eps,
                                         unsigned workers, uint64_t seed) {
    struct Item {
        GameState state;
        double z;
    };
    std::vector<Item> items;
    for (const auto& rec : records) {
        GameState s(rec.board_size);
        for (Move mv : rec.moves) {
            items.push_back({s, s.to_move() == rec.winner ? 1.0 : -1.0});
            s = s.play(mv);
        }
    }
    std::vector<LabeledState> out(items.size());
    workers = std::max(1u, workers);
    std::vector<std::unique_ptr<Evaluator>> evals(workers);
    parallel_for_indexed(items.size(), workers, [&](size_t i, unsigned w) {
        if (!evals[w]) evals[w] = make_eval();
        SearchParams params;  // no noise for relabeling
        SearchTrace t = search(items[i].state, n_max, *evals[w], params, derive_seed(seed, i));
        UncertaintyLabel label = labels_from_trace(t, n_max, eps);
        label.z = items[i].z;
        out[i] = {items[i].state, std::move(label), std::move(t)};
    });
    return out;
}

inline double fraction_m_equal_1(const std::vector<LabeledState>& labeled) {
    if (labeled.empty()) return 0.0;
    size_t ones = 0;
    for (const auto& ls : labeled)
        if (ls.label.m == 1) ++ones;
    return static_cast<double>(ones) / static_cast<double>(labeled.size());
}

struct DataRow {
    std::vector<double> state_feat;
    std::vector<double> mcts_feat;  // empty in state-only datasets
    double u_target = 0.0;
    std::vector<double> pi_target;
    double z_target = 0.0;
    double weight = 1.0;
    int32_t m = 1;  // minimum required simulations, kept for reports
};

struct Dataset {
    int32_t board_size = 5;
    int32_t n_max = 400;
    double eps = 0.05;
    int32_t state_channels = kStateChannels;
    int32_t mcts_channels = 0;
    std::vector<DataRow> rows;

    size_t positives() const {
        size_t p = 0;
        for (const auto& r : rows)
            if (r.u_target >= 0.5) ++p;
        return p;
    }
};

/**
 * Rows for training the before-search predictor: board encoding with
 * targets (U(s,1), final search policy, game outcome).
 */
inline Dataset build_state_un_dataset(const std::vector<LabeledState>& labeled) {
    if (labeled.empty()) throw std::invalid_argument("no labeled states");
    Dataset ds;
    ds.board_size = labeled.front().state.size();
    ds.n_max = labeled.front().label.n_max;
    ds.eps = labeled.front().label.eps;
    ds.rows.reserve(labeled.size());
    for (const auto& ls : labeled) {
        if (ls.label.n_max != ds.n_max) throw std::invalid_argument("mixed n_max in labels");
        DataRow r;
        r.state_feat = state_features(ls.state).data;
        r.u_target = static_cast<double>(ls.label.u_series.front());  // U(s,1)
        r.pi_target = ls.label.final_policy;
        r.z_target = ls.label.z;
        r.m = ls.label.m;
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

struct PruneReport {
    size_t kept = 0;
    size_t pruned_m1 = 0;
    size_t positives = 0;
    size_t negatives = 0;
    double positive_weight = 1.0;
    double negative_weight = 1.0;
    double expected_positive_freq = 0.0;
};

struct BalanceBand {
    double lo = 0.3;
    double hi = 0.7;
};

/**
 * Builds the mid-search predictor's dataset: drops easy rows (m = 1
 * that the before-search net already scores below prune_thr), attaches
 * tree features at the training checkpoint, and sets sampling weights
 * so the expected positive-class share lands inside the band. Weighted
 * sampling, not duplication, keeps the loss average unbiased.
 */
inline std::pair<Dataset, PruneReport> prune_and_balance(
    const std::vector<LabeledState>& labeled, const std::vector<double>& state_un_scores,
    double prune_thr, int n_star, BalanceBand band = {}) {
    if (labeled.empty()) throw std::invalid_argument("no labeled states");
    if (labeled.size() != state_un_scores.size())
        throw std::invalid_argument("scores do not align with labels");
    if (n_star < 2 || n_star > labeled.front().label.n_max)
        throw std::invalid_argument("training checkpoint must lie in [2, n_max]");
    if (!(band.lo > 0.0 && band.lo <= band.hi && band.hi < 1.0))
        throw std::invalid_argument("bad balance band");

    Dataset ds;
    ds.board_size = labeled.front().state.size();
    ds.n_max = labeled.front().label.n_max;
    ds.eps = labeled.front().label.eps;
    ds.mcts_channels = kMctsChannels;
    PruneReport report;
    for (size_t i = 0; i < labeled.size(); ++i) {
        const auto& ls = labeled[i];
        if (ls.label.m == 1 && state_un_scores[i] < prune_thr) {
            ++report.pruned_m1;
            continue;
        }
        DataRow r;
        r.state_feat = state_features(ls.state).data;
        r.mcts_feat = mcts_features(ls.trace, n_star).data;
        r.u_target = static_cast<double>(ls.label.u_series[static_cast<size_t>(n_star - 1)]);
        r.pi_target = ls.label.final_policy;
        r.z_target = ls.label.z;
        r.m = ls.label.m;
        ds.rows.push_back(std::move(r));
    }
    report.kept = ds.rows.size();
    report.positives = ds.positives();
    report.negatives = report.kept - report.positives;
    if (report.positives == 0)
        throw std::runtime_error("degenerate dataset: no uncertain states survived pruning");

    double p = static_cast<double>(report.positives);
    double n = static_cast<double>(report.negatives);
    double freq = p / (p + n);
    // An all-positive survivor set cannot be rebalanced; weights stay 1.
    if (freq < band.lo) {
        report.positive_weight = n / p;  // aim for a balanced draw
    } else if (freq > band.hi && report.negatives > 0) {
        report.negative_weight = p / n;
    }
    for (auto& r : ds.rows)
        r.weight = r.u_target >= 0.5 ? report.positive_weight : report.negative_weight;
    double wp = p * report.positive_weight;
    report.expected_positive_freq = wp / (wp + n * report.negative_weight);
    return {std::move(ds), report};
}

inline constexpr const char* kDatasetMagic = "DSMCTS-SET";
inline constexpr uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    write_string(out, kDatasetMagic);
    write_raw<uint32_t>(out, kDatasetVersion);
    write_raw<int32_t>(out, ds.board_size);
    write_raw<int32_t>(out, ds.n_max);
    write_raw<double>(out, ds.eps);
    write_raw<int32_t>(out, ds.state_channels);
    write_raw<int32_t>(out, ds.mcts_channels);
    write_raw<uint64_t>(out, ds.rows.size());
    auto write_vec = [](std::ostream& o, const std::vector<double>& v) {
        write_raw<uint32_t>(o, static_cast<uint32_t>(v.size()));
        for (double x : v) write_raw<double>(o, x);
    };
    for (const auto& r : ds.rows) {
        std::ostringstream rec(std::ios::binary);
        write_vec(rec, r.state_feat);
        write_vec(rec, r.mcts_feat);
        write_raw<double>(rec, r.u_target);
        write_vec(rec, r.pi_target);
        write_raw<double>(rec, r.z_target);
        write_raw<double>(rec, r.weight);
        write_raw<int32_t>(rec, r.m);
        std::string payload = rec.str();
        write_raw<uint32_t>(out, static_cast<uint32_t>(payload.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    if (!out) throw std::runtime_error("dataset write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dataset: " + path);
    if (read_string(in) != kDatasetMagic) throw std::runtime_error("not a dataset file: " + path);
    if (read_raw<uint32_t>(in) != kDatasetVersion)
        throw std::runtime_error("unsupported dataset version: " + path);
    Dataset ds;
    ds.board_size = read_raw<int32_t>(in);
    ds.n_max = read_raw<int32_t>(in);
    ds.eps = read_raw<double>(in);
    ds.state_channels = read_raw<int32_t>(in);
    ds.mcts_channels = read_raw<int32_t>(in);
    uint64_t count = read_raw<uint64_t>(in);
    auto read_vec = [](std::istream& i) {
        uint32_t n = read_raw<uint32_t>(i);
        std::vector<double> v(n);
        for (auto& x : v) x = read_raw<double>(i);
        return v;
    };
    ds.rows.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t payload = read_raw<uint32_t>(in);
        (void)payload;
        DataRow r;
        r.state_feat = read_vec(in);
        r.mcts_feat = read_vec(in);
        r.u_target = read_raw<double>(in);
        r.pi_target = read_vec(in);
        r.z_target = read_raw<double>(in);
        r.weight = read_raw<double>(in);
        r.m = read_raw<int32_t>(in);
        ds.rows.push_back(std::move(r));
    }
    if (!in) throw std::runtime_error("truncated dataset: " + path);
    return ds;
}

inline std::string dataset_manifest_text(const Dataset& ds) {
    std::ostringstream s;
    size_t pos = ds.positives();
    s << "rows: " << ds.rows.size() << "\n"
      << "board_size: " << ds.board_size << "\n"
      << "n_max: " << ds.n_max << "\n"
      << "eps: " << ds.eps << "\n"
      << "state_channels: " << ds.state_channels << "\n"
      << "mcts_channels: " << ds.mcts_channels << "\n"
      << "positive_rows: " << pos << "\n"
      << "negative_rows: " << ds.rows.size() - pos << "\n";
    if (!ds.rows.empty()) {
        s << "positive_fraction: "
          << static_cast<double>(pos) / static_cast<double>(ds.rows.size()) << "\n";
    }
    return s.str();
}

inline constexpr const char* kGamesMagic = "DSMCTS-GAMES";
inline constexpr uint32_t kGamesVersion = 1;

inline void save_records(const std::vector<GameRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write game records: " + path);
    write_string(out, kGamesMagic);
    write_raw<uint32_t>(out, kGamesVersion);
    write_raw<uint64_t>(out, records.size());
    for (const auto& rec : records) {
        write_raw<int32_t>(out, rec.board_size);
        write_raw<uint8_t>(out, rec.winner == Player::Black ? 0 : 1);
        write_raw<uint32_t>(out, static_cast<uint32_t>(rec.moves.size()));
        for (Move mv : rec.moves)
            write_raw<int16_t>(out, static_cast<int16_t>(move_index(mv, rec.board_size)));
    }
    if (!out) throw std::runtime_error("game record write failed: " + path);
}

/** Loads records and replays each game to enforce legality and outcome. */
inline std::vector<GameRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read game records: " + path);
    if (read_string(in) != kGamesMagic)
        throw std::runtime_error("not a game record file: " + path);
    if (read_raw<uint32_t>(in) != kGamesVersion)
        throw std::runtime_error("unsupported game record version: " + path);
    uint64_t count = read_raw<uint64_t>(in);
    std::vector<GameRecord> records;
    records.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        GameRecord rec;
        rec.board_size = read_raw<int32_t>(in);
        rec.winner = read_raw<uint8_t>(in) == 0 ? Player::Black : Player::White;
        uint32_t n = read_raw<uint32_t>(in);
        GameState s(rec.board_size);
        for (uint32_t k = 0; k < n; ++k) {
            Move mv = index_move(read_raw<int16_t>(in), rec.board_size);
            s = s.play(mv);  // throws on an illegal record
            rec.moves.push_back(mv);
        }
        if (!s.is_terminal() || s.winner() != rec.winner)
            throw std::runtime_error("game record outcome mismatch: " + path);
        records.push_back(std::move(rec));
    }
    if (!in) throw std::runtime_error("truncated game record file: " + path);
    return records;
}

inline void write_state(std::ostream& out, const GameState& s) {
    write_raw<int32_t>(out, s.size());
    write_raw<uint8_t>(out, s.to_move() == Player::Black ? 0 : 1);
    for (int r = 0; r < s.size(); ++r)
        for (int c = 0; c < s.size(); ++c) write_raw<uint8_t>(out, static_cast<uint8_t>(s.cell(r, c)));
}

inline GameState read_state(std::istream& in) {
    int32_t size = read_raw<int32_t>(in);
    if (size < 1 || size > kMaxBoardSize) throw std::runtime_error("bad board size in stream");
    Player to_move = read_raw<uint8_t>(in) == 0 ? Player::Black : Player::White;
    std::vector<Cell> cells(static_cast<size_t>(size) * static_cast<size_t>(size));
    for (auto& c : cells) {
        uint8_t raw = read_raw<uint8_t>(in);
        if (raw > 2) throw std::runtime_error("bad cell in stream");
        c = static_cast<Cell>(raw);
    }
    return GameState::from_cells(size, cells, to_move);
}

inline constexpr const char* kLabeledMagic = "DSMCTS-LBL";
inline constexpr uint32_t kLabeledVersion = 1;

inline void save_labeled(const std::vector<LabeledState>& labeled, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write labeled states: " + path);
    write_string(out, kLabeledMagic);
    write_raw<uint32_t>(out, kLabeledVersion);
    write_raw<uint64_t>(out, labeled.size());
    auto write_vec = [](std::ostream& o, const std::vector<double>& v) {
        write_raw<uint32_t>(o, static_cast<uint32_t>(v.size()));
        for (double x : v) write_raw<double>(o, x);
    };
    for (const auto& ls : labeled) {
        std::ostringstream rec(std::ios::binary);
        write_state(rec, ls.state);
        write_raw<int32_t>(rec, ls.label.n_max);
        write_raw<double>(rec, ls.label.eps);
        write_raw<int32_t>(rec, ls.label.m);
        write_raw<double>(rec, ls.label.z);
        write_raw<uint32_t>(rec, static_cast<uint32_t>(ls.label.u_series.size()));
        for (uint8_t u : ls.label.u_series) write_raw<uint8_t>(rec, u);
        write_vec(rec, ls.label.r_series);
        write_vec(rec, ls.label.final_policy);
        write_vec(rec, ls.label.final_q);
        write_state(rec, ls.trace.root);
        write_vec(rec, ls.trace.root_prior);
        write_raw<uint32_t>(rec, static_cast<uint32_t>(ls.trace.steps.size()));
        for (auto [a, v] : ls.trace.steps) {
            write_raw<int16_t>(rec, a);
            write_raw<double>(rec, v);
        }
        std::string payload = rec.str();
        write_raw<uint32_t>(out, static_cast<uint32_t>(payload.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    if (!out) throw std::runtime_error("labeled state write failed: " + path);
}

inline std::vector<LabeledState> load_labeled(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read labeled states: " + path);
    if (read_string(in) != kLabeledMagic)
        throw std::runtime_error("not a labeled state file: " + path);
    if (read_raw<uint32_t>(in) != kLabeledVersion)
        throw std::runtime_error("unsupported labeled state version: " + path);
    uint64_t count = read_raw<uint64_t>(in);
    auto read_vec = [](std::istream& i) {
        uint32_t n = read_raw<uint32_t>(i);
        std::vector<double> v(n);
        for (auto& x : v) x = read_raw<double>(i);
        return v;
    };
    std::vector<LabeledState> labeled;
    labeled.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        (void)read_raw<uint32_t>(in);
        LabeledState ls;
        ls.state = read_state(in);
        ls.label.n_max = read_raw<int32_t>(in);
        ls.label.eps = read_raw<double>(in);
        ls.label.m = read_raw<int32_t>(in);
        ls.label.z = read_raw<double>(in);
        uint32_t un = read_raw<uint32_t>(in);
        ls.label.u_series.resize(un);
        for (auto& u : ls.label.u_series) u = read_raw<uint8_t>(in);
        ls.label.r_series = read_vec(in);
        ls.label.final_policy = read_vec(in);
        ls.label.final_q = read_vec(in);
        ls.trace.root = read_state(in);
        ls.trace.root_prior = read_vec(in);
        uint32_t steps = read_raw<uint32_t>(in);
        ls.trace.steps.resize(steps);
        for (auto& [a, v] : ls.trace.steps) {
            a = read_raw<int16_t>(in);
            v = read_raw<double>(in);
        }
        if (ls.label.u_series.size() != static_cast<size_t>(ls.label.n_max))
            throw std::runtime_error("labeled state schema damaged: " + path);
        labeled.push_back(std::move(ls));
    }
    if (!in) throw std::runtime_error("truncated labeled state file: " + path);
    return labeled;
}

/** Minimal SGF-style dump of one game, for eyeballing records. */
inline std::string to_sgf(const GameRecord& rec) {
    std::ostringstream s;
    s << "(;FF[4]GM[1]SZ[" << rec.board_size << "]RE["
      << (rec.winner == Player::Black ? "B+" : "W+") << "]";
    Player p = Player::Black;
    for (Move mv : rec.moves) {
        s << ";" << (p == Player::Black ? "B" : "W") << "["
          << static_cast<char>('a' + mv.col) << static_cast<char>('a' + mv.row) << "]";
        p = opponent(p);
    }
    s << ")";
    return s.str();
}

}  // namespace dsmcts
