#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsmcts/ds_mcts.hpp"
#include "dsmcts/features.hpp"
#include "dsmcts/harness.hpp"
#include "dsmcts/manifest.hpp"
#include "dsmcts/network.hpp"
#include "dsmcts/selfplay.hpp"
#include "dsmcts/train.hpp"
#include "dsmcts/uncertainty.hpp"

using namespace dsmcts;

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

// Full invocation, so a manifest pins the run's exact flags, not just its name.
std::string g_command_line;

void emit_manifest(const std::string& command, const std::string& config_text, uint64_t seed,
                   unsigned workers, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, double seconds) {
    RunManifest m;
    m.command = g_command_line.empty() ? command : g_command_line;
    m.config_text = config_text;
    m.seed = seed;
    m.workers = workers;
    for (const auto& p : inputs) m.inputs.push_back(stamp_file(p));
    for (const auto& p : outputs) m.outputs.push_back(stamp_file(p));
    m.wall_clock_sec = seconds;
    write_manifest(m, manifest_path(outputs.front()));
}

// ---------------------------------------------------------------- selfplay

struct SelfplayOpts {
    std::string net;
    std::string out;
    int board = 5;
    int games = 200;
    int sims = 50;
    double opening_fraction = 0.3;
    uint64_t seed = 1;
    unsigned workers = 1;
};

int run_selfplay(const SelfplayOpts& o) {
    StageTimer timer;
    std::optional<Network> net;
    EvalFactory make_eval = uniform_eval_factory();
    if (!o.net.empty()) {
        net.emplace(load_network(o.net));
        make_eval = net_eval_factory(*net);
    }
    SelfplayConfig cfg;
    cfg.board_size = o.board;
    cfg.games = o.games;
    cfg.sims_per_move = o.sims;
    cfg.opening_fraction = o.opening_fraction;
    cfg.workers = o.workers;
    auto records = generate_selfplay(make_eval, cfg, o.seed);
    save_records(records, o.out);

    size_t moves = 0;
    for (const auto& r : records) moves += r.moves.size();
    std::ostringstream config;
    config << "board=" << o.board << "\ngames=" << o.games << "\nsims=" << o.sims
           << "\nopening_fraction=" << o.opening_fraction << "\nevaluator="
           << (o.net.empty() ? "uniform" : o.net) << "\n";
    std::vector<std::string> inputs;
    if (!o.net.empty()) inputs.push_back(o.net);
    emit_manifest("selfplay", config.str(), o.seed, o.workers, inputs, {o.out}, timer.seconds());
    std::cout << "selfplay: " << records.size() << " games, "
              << fmt(static_cast<double>(moves) / static_cast<double>(records.size()))
              << " moves/game -> " << o.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- relabel

struct RelabelOpts {
    std::string games;
    std::string net;
    std::string out;
    int n_max = 400;
    double eps = 0.05;
    uint64_t seed = 1;
    unsigned workers = 1;
};

int run_relabel(const RelabelOpts& o) {
    StageTimer timer;
    auto records = load_records(o.games);
    std::optional<Network> net;
    EvalFactory make_eval = uniform_eval_factory();
    if (!o.net.empty()) {
        net.emplace(load_network(o.net));
        make_eval = net_eval_factory(*net);
    }
    auto labeled = relabel(records, make_eval, o.n_max, o.eps, o.workers, o.seed);
    save_labeled(labeled, o.out);

    auto rep = msc_report(labeled);
    std::ostringstream config;
    config << "n_max=" << o.n_max << "\neps=" << o.eps << "\nevaluator="
           << (o.net.empty() ? "uniform" : o.net) << "\n";
    std::vector<std::string> inputs{o.games};
    if (!o.net.empty()) inputs.push_back(o.net);
    emit_manifest("relabel", config.str(), o.seed, o.workers, inputs, {o.out}, timer.seconds());
    std::cout << "relabel: " << labeled.size() << " states, mean msc " << fmt(rep.mean_m)
              << ", immediately settled " << fmt(rep.fraction_m1) << " -> " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- training

struct TrainOpts {
    std::string data;
    std::string out;
    std::string state_net;  // tree training only: scores for pruning
    int n_star = 0;         // tree training only
    double prune_thr = 0.05;
    int blocks = 2;
    int filters = 32;
    int head_hidden = 32;
    int epochs = 8;
    int batch = 64;
    double lr = 0.02;
    double pv_weight = 0.1;
    double holdout = 0.1;
    uint64_t seed = 1;
    unsigned workers = 1;
};

void print_epochs(const TrainStats& stats) {
    for (size_t e = 0; e < stats.epochs.size(); ++e)
        std::cout << "  epoch " << e + 1 << ": loss " << fmt(stats.epochs[e].mean_loss) << " (lr "
                  << fmt(stats.epochs[e].lr) << ")\n";
    if (stats.skipped_steps > 0)
        std::cout << "  skipped " << stats.skipped_steps << " non-finite steps\n";
}

int run_train_state_un(const TrainOpts& o) {
    StageTimer timer;
    auto labeled = load_labeled(o.data);
    auto [train_set, holdout_set] = split_holdout(labeled, o.holdout, derive_seed(o.seed, 17));
    Dataset ds = build_state_un_dataset(train_set);

    NetConfig nc;
    nc.board_size = ds.board_size;
    nc.mcts_channels = 0;
    nc.blocks = o.blocks;
    nc.filters = o.filters;
    nc.head_hidden = o.head_hidden;
    nc.c1 = o.pv_weight;
    Network net(nc);
    net.init_weights(derive_seed(o.seed, 1));

    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.seed = derive_seed(o.seed, 2);
    TrainStats stats = train_network(net, ds, tc);
    save_network(net, o.out);
    print_epochs(stats);

    if (!holdout_set.empty()) {
        Dataset hd = build_state_un_dataset(holdout_set);
        auto scores = score_rows(net, hd, o.workers);
        double mae = 0.0;
        for (size_t i = 0; i < scores.size(); ++i)
            mae += std::abs(scores[i] - hd.rows[i].u_target);
        std::cout << "  holdout |u - target| mean: "
                  << fmt(mae / static_cast<double>(scores.size())) << " over " << scores.size()
                  << " states\n";
    }

    std::ostringstream config;
    config << "blocks=" << o.blocks << "\nfilters=" << o.filters << "\nhead_hidden="
           << o.head_hidden << "\nepochs=" << o.epochs << "\nbatch=" << o.batch << "\nlr=" << o.lr
           << "\npv_weight=" << o.pv_weight << "\nholdout=" << o.holdout << "\nrows="
           << ds.rows.size() << "\n";
    emit_manifest("train-state-un", config.str(), o.seed, o.workers, {o.data}, {o.out},
                  timer.seconds());
    std::cout << "train-state-un: " << ds.rows.size() << " rows -> " << o.out << "\n";
    return 0;
}

int run_train_mcts_un(const TrainOpts& o) {
    StageTimer timer;
    auto labeled = load_labeled(o.data);
    Network state_net = load_network(o.state_net);
    auto [train_set, holdout_set] = split_holdout(labeled, o.holdout, derive_seed(o.seed, 17));

    auto scores = state_un_scores(state_net, train_set, o.workers);
    auto [ds, prune] = prune_and_balance(train_set, scores, o.prune_thr, o.n_star);
    std::cout << "  pruned " << prune.pruned_m1 << " of " << train_set.size() << " states; "
              << prune.positives << " positive / " << prune.negatives
              << " negative rows, weighted positive share " << fmt(prune.expected_positive_freq)
              << "\n";

    NetConfig nc;
    nc.board_size = ds.board_size;
    nc.mcts_channels = kMctsChannels;
    nc.blocks = o.blocks;
    nc.filters = o.filters;
    nc.head_hidden = o.head_hidden;
    nc.c1 = o.pv_weight;
    Network net(nc);
    net.init_weights(derive_seed(o.seed, 1));

    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.seed = derive_seed(o.seed, 2);
    TrainStats stats = train_network(net, ds, tc);
    save_network(net, o.out);
    print_epochs(stats);

    std::ostringstream config;
    config << "n_star=" << o.n_star << "\nprune_thr=" << o.prune_thr << "\nblocks=" << o.blocks
           << "\nfilters=" << o.filters << "\nhead_hidden=" << o.head_hidden << "\nepochs="
           << o.epochs << "\nbatch=" << o.batch << "\nlr=" << o.lr << "\npv_weight="
           << o.pv_weight << "\nholdout=" << o.holdout << "\nrows=" << ds.rows.size() << "\n";
    emit_manifest("train-mcts-un", config.str(), o.seed, o.workers, {o.data, o.state_net},
                  {o.out}, timer.seconds());
    std::cout << "train-mcts-un: " << ds.rows.size() << " rows -> " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------- choose-checkpoint

struct ChooseOpts {
    std::string data;
    std::string out;
    uint64_t seed = 1;
};

int run_choose_checkpoint(const ChooseOpts& o) {
    StageTimer timer;
    auto labeled = load_labeled(o.data);
    if (labeled.empty()) throw std::runtime_error("no labeled states in " + o.data);
    int n_max = labeled.front().label.n_max;
    std::vector<int> ms;
    for (const auto& ls : labeled) ms.push_back(ls.label.m);
    CheckpointChoice choice = choose_checkpoint(ms, n_max);

    std::ofstream csv(o.out);
    if (!csv) throw std::runtime_error("cannot write " + o.out);
    csv << "n,f\n";
    csv.precision(17);
    for (int n = 1; n <= n_max; ++n)
        csv << n << "," << choice.f_values[static_cast<size_t>(n - 1)] << "\n";
    csv.close();

    std::ostringstream config;
    config << "n_max=" << n_max << "\nn_star=" << choice.n_star << "\n";
    emit_manifest("choose-checkpoint", config.str(), o.seed, 1, {o.data}, {o.out},
                  timer.seconds());
    std::cout << "choose-checkpoint: n* = " << choice.n_star << " (f = "
              << fmt(choice.f_values[static_cast<size_t>(choice.n_star - 1)]) << ") -> " << o.out
              << "\n";
    return 0;
}

// ----------------------------------------------------- validate-thresholds

struct ValidateOpts {
    std::string data;
    std::string state_net;
    std::string tree_net;
    std::string pv_net;
    std::string config_path;
    std::string out;
    std::string out_config;
    double target_recall = 0.0;  // 0: keep thresholds from the config file
    uint64_t seed = 1;
    unsigned workers = 1;
};

int run_validate_thresholds(const ValidateOpts& o) {
    StageTimer timer;
    auto labeled = load_labeled(o.data);
    DSConfig cfg = parse_ds_config_file(o.config_path);

    std::optional<Network> state_net, tree_net, pv_net;
    std::optional<NetEvaluator> pv_eval;
    if (!o.state_net.empty()) state_net.emplace(load_network(o.state_net));
    if (!o.tree_net.empty()) tree_net.emplace(load_network(o.tree_net));
    if (!o.pv_net.empty()) {
        pv_net.emplace(load_network(o.pv_net));
        pv_eval.emplace(*pv_net);
    }
    const Network* sn = state_net ? &*state_net : nullptr;
    const Network* tn = tree_net ? &*tree_net : nullptr;
    Evaluator* pe = pv_eval ? &*pv_eval : nullptr;

    if (o.target_recall > 0.0) {
        auto scores = checkpoint_scores(labeled, cfg, sn, tn, pe, o.workers);
        cfg.thresholds = choose_thresholds(labeled, cfg, scores, o.target_recall);
    }
    ThresholdReport rep = validate_thresholds(labeled, cfg, sn, tn, pe, o.workers);

    std::ofstream csv(o.out);
    if (!csv) throw std::runtime_error("cannot write " + o.out);
    csv.precision(17);
    csv << "checkpoint,threshold,positives,stopped,stopped_positives,recall,false_stop_rate\n";
    for (const auto& cr : rep.checkpoints)
        csv << cr.checkpoint << "," << cr.threshold << "," << cr.positives << "," << cr.stopped
            << "," << cr.stopped_positives << "," << cr.recall << "," << cr.false_stop_rate
            << "\n";
    csv << "\nmetric,value\n";
    csv << "states," << labeled.size() << "\n";
    csv << "projected_avg_sims," << rep.projected_avg_sims << "\n";
    for (size_t i = 0; i < rep.stop_histogram.size(); ++i) {
        std::string bucket = i < cfg.checkpoints.size()
                                 ? "stops_at_" + std::to_string(cfg.checkpoints[i])
                                 : "full_searches";
        csv << bucket << "," << rep.stop_histogram[i] << "\n";
    }
    csv.close();

    std::vector<std::string> outputs{o.out};
    if (!o.out_config.empty()) {
        std::ofstream oc(o.out_config);
        if (!oc) throw std::runtime_error("cannot write " + o.out_config);
        oc << ds_config_text(cfg);
        oc.close();
        outputs.push_back(o.out_config);
    }

    std::vector<std::string> inputs{o.data, o.config_path};
    if (!o.state_net.empty()) inputs.push_back(o.state_net);
    if (!o.tree_net.empty()) inputs.push_back(o.tree_net);
    if (!o.pv_net.empty()) inputs.push_back(o.pv_net);
    std::ostringstream config;
    config << ds_config_text(cfg) << "target_recall=" << o.target_recall << "\n";
    emit_manifest("validate-thresholds", config.str(), o.seed, o.workers, inputs, outputs,
                  timer.seconds());

    for (const auto& cr : rep.checkpoints)
        std::cout << "  checkpoint " << cr.checkpoint << ": thr " << fmt(cr.threshold)
                  << ", recall " << fmt(cr.recall) << ", stops " << cr.stopped << " ("
                  << cr.stopped_positives << " wrong)\n";
    std::cout << "validate-thresholds: projected " << fmt(rep.projected_avg_sims)
              << " sims/state over " << labeled.size() << " states -> " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------------- match

struct MatchOpts {
    std::string a_kind = "ds";
    std::string b_kind = "pv";
    std::string pv_net;
    std::string state_net;
    std::string tree_net;
    std::string config_path;
    std::string out;
    std::string log;
    int board = 5;
    int games = 400;
    int sims = 400;
    int reduced_sims = 50;
    double stop_fraction = 0.5;
    int opening_plies = 4;
    uint64_t seed = 1;
    unsigned workers = 1;
};

struct NetStore {
    std::optional<Network> pv, state, tree;
};

AgentFactory build_agent(const std::string& kind, const MatchOpts& o, NetStore& nets,
                         const std::optional<DSConfig>& ds_cfg) {
    auto make_pv_eval = [&]() -> std::unique_ptr<Evaluator> {
        if (nets.pv) return std::make_unique<NetEvaluator>(*nets.pv);
        return std::make_unique<UniformEvaluator>();
    };
    if (kind == "pv") {
        int sims = o.sims;
        return [make_pv_eval, sims] { return std::make_unique<SearchAgent>(make_pv_eval(), sims); };
    }
    if (kind == "stop") {
        int sims = o.sims;
        return [make_pv_eval, sims] { return std::make_unique<StopAgent>(make_pv_eval(), sims); };
    }
    if (kind == "random") {
        int sims = o.sims, reduced = o.reduced_sims;
        double fraction = o.stop_fraction;
        return [make_pv_eval, fraction, reduced, sims] {
            return std::make_unique<RandomStopAgent>(make_pv_eval(), fraction, reduced, sims);
        };
    }
    if (kind == "ds") {
        if (!ds_cfg) throw std::invalid_argument("ds agent needs --config");
        const Network* sn = nets.state ? &*nets.state : nullptr;
        const Network* tn = nets.tree ? &*nets.tree : nullptr;
        DSConfig cfg = *ds_cfg;
        return [make_pv_eval, cfg, sn, tn] {
            return std::make_unique<DsAgent>(cfg, make_pv_eval(), sn, tn);
        };
    }
    throw std::invalid_argument("unknown agent kind: " + kind + " (pv | ds | stop | random)");
}

int run_match(const MatchOpts& o) {
    StageTimer timer;
    NetStore nets;
    if (!o.pv_net.empty()) nets.pv.emplace(load_network(o.pv_net));
    if (!o.state_net.empty()) {
        nets.state.emplace(o.state_net == o.pv_net && nets.pv ? *nets.pv
                                                              : load_network(o.state_net));
    }
    if (!o.tree_net.empty()) nets.tree.emplace(load_network(o.tree_net));
    std::optional<DSConfig> ds_cfg;
    if (!o.config_path.empty()) ds_cfg = parse_ds_config_file(o.config_path);

    AgentFactory make_a = build_agent(o.a_kind, o, nets, ds_cfg);
    AgentFactory make_b = build_agent(o.b_kind, o, nets, ds_cfg);

    MatchConfig mc;
    mc.board_size = o.board;
    mc.games = o.games;
    mc.opening_random_plies = o.opening_plies;
    mc.workers = o.workers;
    MatchResult result = play_match(make_a, make_b, mc, o.seed);

    std::ofstream csv(o.out);
    if (!csv) throw std::runtime_error("cannot write " + o.out);
    csv << match_csv(result);
    csv.close();
    std::vector<std::string> outputs{o.out};
    if (!o.log.empty()) {
        std::ofstream jl(o.log);
        if (!jl) throw std::runtime_error("cannot write " + o.log);
        write_match_log(result, o.a_kind, o.b_kind, o.board, jl);
        jl.close();
        outputs.push_back(o.log);
    }

    std::vector<std::string> inputs;
    if (!o.pv_net.empty()) inputs.push_back(o.pv_net);
    if (!o.state_net.empty() && o.state_net != o.pv_net) inputs.push_back(o.state_net);
    if (!o.tree_net.empty()) inputs.push_back(o.tree_net);
    if (!o.config_path.empty()) inputs.push_back(o.config_path);
    std::ostringstream config;
    config << "a=" << o.a_kind << "\nb=" << o.b_kind << "\nboard=" << o.board << "\ngames="
           << o.games << "\nsims=" << o.sims << "\nopening_plies=" << o.opening_plies << "\n";
    emit_manifest("match", config.str(), o.seed, o.workers, inputs, outputs, timer.seconds());

    double winrate = static_cast<double>(result.a_wins) / static_cast<double>(result.games);
    std::cout << "match: " << o.a_kind << " vs " << o.b_kind << " over " << result.games
              << " games\n";
    std::cout << "  a wins " << result.a_wins << " (" << fmt(100.0 * winrate) << "%, wilson ["
              << fmt(100.0 * result.a_wilson.lo) << ", " << fmt(100.0 * result.a_wilson.hi)
              << "])\n";
    std::cout << "  avg sims: a " << fmt(result.a_avg_sims) << ", b " << fmt(result.b_avg_sims)
              << ", ratio " << fmt(avg_sim_ratio(result, o.sims)) << "\n";
    return 0;
}

// -------------------------------------------------------------- msc-report

struct MscOpts {
    std::string data;
    std::string out;
    uint64_t seed = 1;
};

int run_msc_report(const MscOpts& o) {
    StageTimer timer;
    auto labeled = load_labeled(o.data);
    MscReport rep = msc_report(labeled);
    std::ofstream csv(o.out);
    if (!csv) throw std::runtime_error("cannot write " + o.out);
    csv << msc_csv(rep);
    csv.close();
    std::ostringstream config;
    config << "states=" << rep.msc.size() << "\n";
    emit_manifest("msc-report", config.str(), o.seed, 1, {o.data}, {o.out}, timer.seconds());
    std::cout << "msc-report: mean msc " << fmt(rep.mean_m) << ", share settled by one simulation "
              << fmt(rep.fraction_m1) << " -> " << o.out << "\n";
    return 0;
}

// --------------------------------------------------------------------- gtp

struct GtpOpts {
    std::string pv_net;
    std::string state_net;
    std::string tree_net;
    std::string config_path;
    int sims = 400;
    uint64_t seed = 1;
};

int run_gtp(const GtpOpts& o) {
    NetStore nets;
    if (!o.pv_net.empty()) nets.pv.emplace(load_network(o.pv_net));
    if (!o.state_net.empty()) {
        nets.state.emplace(o.state_net == o.pv_net && nets.pv ? *nets.pv
                                                              : load_network(o.state_net));
    }
    if (!o.tree_net.empty()) nets.tree.emplace(load_network(o.tree_net));

    DSConfig cfg;
    if (!o.config_path.empty()) {
        cfg = parse_ds_config_file(o.config_path);
    } else {
        // Zero threshold never fires, so this is a plain fixed-budget
        // search expressed in the same machinery.
        cfg.n_max = o.sims;
        cfg.checkpoints = {0};
        cfg.thresholds = {0.0};
        cfg.mode = StopMode::kCalibrated;
    }
    validate_ds_config(cfg);
    if (cfg.mode == StopMode::kStateUn && !nets.state)
        throw std::invalid_argument("gtp: this config needs --state-net");
    if (cfg.checkpoints.size() > 1 && !nets.tree)
        throw std::invalid_argument("gtp: this config needs --tree-net");

    std::unique_ptr<Evaluator> pv;
    if (nets.pv) {
        pv = std::make_unique<NetEvaluator>(*nets.pv);
    } else {
        pv = std::make_unique<UniformEvaluator>();
    }
    const Network* sn = nets.state ? &*nets.state : nullptr;
    const Network* tn = nets.tree ? &*nets.tree : nullptr;

    int size = nets.pv ? nets.pv->config().board_size : 5;
    GameState game(size);
    uint64_t move_counter = 0;
    std::string line;

    auto respond = [](const std::string& id, bool ok, const std::string& text) {
        std::cout << (ok ? "=" : "?") << (id.empty() ? "" : id) << " " << text << "\n\n";
        std::cout.flush();
    };

    while (std::getline(std::cin, line)) {
        std::istringstream words(line);
        std::string id, cmd;
        if (!(words >> cmd)) continue;
        if (!cmd.empty() && std::all_of(cmd.begin(), cmd.end(),
                                        [](unsigned char c) { return std::isdigit(c); })) {
            id = cmd;
            if (!(words >> cmd)) {
                respond(id, false, "missing command");
                continue;
            }
        }
        if (cmd == "protocol_version") {
            respond(id, true, "2");
        } else if (cmd == "name") {
            respond(id, true, "dsmcts");
        } else if (cmd == "boardsize") {
            int n = 0;
            if (!(words >> n) || n < 2 || n > kMaxBoardSize) {
                respond(id, false, "unacceptable size");
                continue;
            }
            if (nets.pv && n != nets.pv->config().board_size) {
                respond(id, false, "loaded network plays " +
                                       std::to_string(nets.pv->config().board_size) + "x" +
                                       std::to_string(nets.pv->config().board_size));
                continue;
            }
            size = n;
            game = GameState(size);
            respond(id, true, "");
        } else if (cmd == "clear_board") {
            game = GameState(size);
            respond(id, true, "");
        } else if (cmd == "play") {
            std::string color, vertex;
            if (!(words >> color >> vertex)) {
                respond(id, false, "syntax: play <color> <vertex>");
                continue;
            }
            std::transform(color.begin(), color.end(), color.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            Player p;
            if (color == "b" || color == "black") {
                p = Player::Black;
            } else if (color == "w" || color == "white") {
                p = Player::White;
            } else {
                respond(id, false, "bad color");
                continue;
            }
            if (p != game.to_move()) {
                respond(id, false, std::string(player_name(game.to_move())) + " to move");
                continue;
            }
            auto mv = parse_move(vertex, size);
            if (!mv || !game.is_legal(*mv)) {
                respond(id, false, "illegal move");
                continue;
            }
            game = game.play(*mv);
            respond(id, true, "");
        } else if (cmd == "genmove") {
            std::string color;
            if (!(words >> color)) {
                respond(id, false, "syntax: genmove <color>");
                continue;
            }
            std::transform(color.begin(), color.end(), color.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            Player p;
            if (color == "b" || color == "black") {
                p = Player::Black;
            } else if (color == "w" || color == "white") {
                p = Player::White;
            } else {
                respond(id, false, "bad color");
                continue;
            }
            if (p != game.to_move()) {
                respond(id, false, std::string(player_name(game.to_move())) + " to move");
                continue;
            }
            if (game.is_terminal()) {
                respond(id, true, "resign");
                continue;
            }
            DSResult r = ds_search(game, cfg, *pv, sn, tn, derive_seed(o.seed, move_counter++));
            Move mv = index_move(r.action, size);
            game = game.play(mv);
            respond(id, true, move_name(mv, size));
        } else if (cmd == "quit") {
            respond(id, true, "");
            break;
        } else {
            respond(id, false, "unknown command");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) {
        if (i) g_command_line += ' ';
        g_command_line += argv[i];
    }
    CLI::App app{"NoGo engine and experiment pipeline with dynamic search budgets"};
    app.require_subcommand(1);

    SelfplayOpts sp;
    auto* sp_cmd = app.add_subcommand("selfplay", "Generate self-play games");
    sp_cmd->add_option("--net", sp.net, "Policy-value network (omit for a uniform evaluator)");
    sp_cmd->add_option("--out", sp.out, "Output game file")->required();
    sp_cmd->add_option("--board", sp.board, "Board size")->capture_default_str();
    sp_cmd->add_option("--games", sp.games, "Number of games")->capture_default_str();
    sp_cmd->add_option("--sims", sp.sims, "Simulations per move")->capture_default_str();
    sp_cmd->add_option("--opening-fraction", sp.opening_fraction,
                       "Share of the board played at temperature 1")
        ->capture_default_str();
    sp_cmd->add_option("--seed", sp.seed, "Master seed")->capture_default_str();
    sp_cmd->add_option("--workers", sp.workers, "Worker threads")->capture_default_str();

    RelabelOpts rl;
    auto* rl_cmd =
        app.add_subcommand("relabel", "Search every recorded position and extract labels");
    rl_cmd->add_option("--games", rl.games, "Input game file")->required();
    rl_cmd->add_option("--net", rl.net, "Policy-value network (omit for a uniform evaluator)");
    rl_cmd->add_option("--out", rl.out, "Output labeled state file")->required();
    rl_cmd->add_option("--n-max", rl.n_max, "Full search budget")->capture_default_str();
    rl_cmd->add_option("--eps", rl.eps, "Reward regret tolerance")->capture_default_str();
    rl_cmd->add_option("--seed", rl.seed, "Master seed")->capture_default_str();
    rl_cmd->add_option("--workers", rl.workers, "Worker threads")->capture_default_str();

    TrainOpts ts;
    auto* ts_cmd = app.add_subcommand(
        "train-state-un", "Train the board-feature network (policy, value, uncertainty heads)");
    ts_cmd->add_option("--data", ts.data, "Labeled state file")->required();
    ts_cmd->add_option("--out", ts.out, "Output network file")->required();
    ts_cmd->add_option("--blocks", ts.blocks, "Residual blocks")->capture_default_str();
    ts_cmd->add_option("--filters", ts.filters, "Convolution filters")->capture_default_str();
    ts_cmd->add_option("--head-hidden", ts.head_hidden, "Head hidden width")
        ->capture_default_str();
    ts_cmd->add_option("--epochs", ts.epochs, "Training epochs")->capture_default_str();
    ts_cmd->add_option("--batch", ts.batch, "Batch size")->capture_default_str();
    ts_cmd->add_option("--lr", ts.lr, "Learning rate")->capture_default_str();
    ts_cmd->add_option("--pv-weight", ts.pv_weight, "Weight of the policy and value loss terms")
        ->capture_default_str();
    ts_cmd->add_option("--holdout", ts.holdout, "Holdout fraction")->capture_default_str();
    ts_cmd->add_option("--seed", ts.seed, "Master seed")->capture_default_str();
    ts_cmd->add_option("--workers", ts.workers, "Worker threads")->capture_default_str();

    TrainOpts tm;
    auto* tm_cmd = app.add_subcommand(
        "train-mcts-un", "Train the tree-feature uncertainty network on pruned, balanced data");
    tm_cmd->add_option("--data", tm.data, "Labeled state file")->required();
    tm_cmd->add_option("--state-net", tm.state_net, "Board-feature network for pruning scores")
        ->required();
    tm_cmd->add_option("--n-star", tm.n_star, "First checkpoint (from choose-checkpoint)")
        ->required();
    tm_cmd->add_option("--out", tm.out, "Output network file")->required();
    tm_cmd->add_option("--prune-thr", tm.prune_thr, "Score below which settled states drop")
        ->capture_default_str();
    tm_cmd->add_option("--blocks", tm.blocks, "Residual blocks")->capture_default_str();
    tm_cmd->add_option("--filters", tm.filters, "Convolution filters")->capture_default_str();
    tm_cmd->add_option("--head-hidden", tm.head_hidden, "Head hidden width")
        ->capture_default_str();
    tm_cmd->add_option("--epochs", tm.epochs, "Training epochs")->capture_default_str();
    tm_cmd->add_option("--batch", tm.batch, "Batch size")->capture_default_str();
    tm_cmd->add_option("--lr", tm.lr, "Learning rate")->capture_default_str();
    tm_cmd->add_option("--pv-weight", tm.pv_weight, "Weight of the policy and value loss terms")
        ->capture_default_str();
    tm_cmd->add_option("--holdout", tm.holdout, "Holdout fraction")->capture_default_str();
    tm_cmd->add_option("--seed", tm.seed, "Master seed")->capture_default_str();
    tm_cmd->add_option("--workers", tm.workers, "Worker threads")->capture_default_str();

    ChooseOpts cc;
    auto* cc_cmd = app.add_subcommand("choose-checkpoint",
                                      "Pick the cost-minimizing first stopping checkpoint");
    cc_cmd->add_option("--data", cc.data, "Labeled state file")->required();
    cc_cmd->add_option("--out", cc.out, "Output cost curve CSV")->required();
    cc_cmd->add_option("--seed", cc.seed, "Master seed")->capture_default_str();

    ValidateOpts vt;
    auto* vt_cmd = app.add_subcommand("validate-thresholds",
                                      "Score stopping thresholds on held-out labeled states");
    vt_cmd->add_option("--data", vt.data, "Labeled holdout file")->required();
    vt_cmd->add_option("--config", vt.config_path, "Stopping schedule config")->required();
    vt_cmd->add_option("--out", vt.out, "Output report CSV")->required();
    vt_cmd->add_option("--state-net", vt.state_net, "Board-feature network");
    vt_cmd->add_option("--tree-net", vt.tree_net, "Tree-feature network");
    vt_cmd->add_option("--pv-net", vt.pv_net, "Policy-value network for calibrated mode");
    vt_cmd->add_option("--target-recall", vt.target_recall,
                       "Re-derive thresholds keeping this recall (0 keeps config values)")
        ->capture_default_str();
    vt_cmd->add_option("--out-config", vt.out_config, "Write the validated config here");
    vt_cmd->add_option("--seed", vt.seed, "Master seed")->capture_default_str();
    vt_cmd->add_option("--workers", vt.workers, "Worker threads")->capture_default_str();

    MatchOpts mt;
    auto* mt_cmd = app.add_subcommand("match", "Play two configured agents against each other");
    mt_cmd->add_option("--a", mt.a_kind, "Agent A: pv | ds | stop | random")
        ->capture_default_str();
    mt_cmd->add_option("--b", mt.b_kind, "Agent B: pv | ds | stop | random")
        ->capture_default_str();
    mt_cmd->add_option("--pv-net", mt.pv_net, "Policy-value network (omit for uniform)");
    mt_cmd->add_option("--state-net", mt.state_net, "Board-feature network for the ds agent");
    mt_cmd->add_option("--tree-net", mt.tree_net, "Tree-feature network for the ds agent");
    mt_cmd->add_option("--config", mt.config_path, "Stopping schedule config for the ds agent");
    mt_cmd->add_option("--out", mt.out, "Output match CSV")->required();
    mt_cmd->add_option("--log", mt.log, "Per-move JSON-lines log");
    mt_cmd->add_option("--board", mt.board, "Board size")->capture_default_str();
    mt_cmd->add_option("--games", mt.games, "Games to play")->capture_default_str();
    mt_cmd->add_option("--sims", mt.sims, "Fixed budget for pv/stop/random agents")
        ->capture_default_str();
    mt_cmd->add_option("--reduced-sims", mt.reduced_sims, "Cut budget for the random agent")
        ->capture_default_str();
    mt_cmd->add_option("--stop-fraction", mt.stop_fraction,
                       "Probability the random agent cuts its budget")
        ->capture_default_str();
    mt_cmd->add_option("--opening-plies", mt.opening_plies, "Random opening moves per game")
        ->capture_default_str();
    mt_cmd->add_option("--seed", mt.seed, "Master seed")->capture_default_str();
    mt_cmd->add_option("--workers", mt.workers, "Worker threads")->capture_default_str();

    MscOpts mr;
    auto* mr_cmd = app.add_subcommand("msc-report",
                                      "Distribution of minimum simulation counts per state");
    mr_cmd->add_option("--data", mr.data, "Labeled state file")->required();
    mr_cmd->add_option("--out", mr.out, "Output CSV")->required();
    mr_cmd->add_option("--seed", mr.seed, "Master seed")->capture_default_str();

    GtpOpts gp;
    auto* gp_cmd = app.add_subcommand("gtp", "Speak a GTP subset on stdin/stdout");
    gp_cmd->add_option("--pv-net", gp.pv_net, "Policy-value network (omit for uniform)");
    gp_cmd->add_option("--state-net", gp.state_net, "Board-feature network");
    gp_cmd->add_option("--tree-net", gp.tree_net, "Tree-feature network");
    gp_cmd->add_option("--config", gp.config_path, "Stopping schedule config");
    gp_cmd->add_option("--sims", gp.sims, "Fixed budget when no config is given")
        ->capture_default_str();
    gp_cmd->add_option("--seed", gp.seed, "Master seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sp_cmd->parsed()) return run_selfplay(sp);
        if (rl_cmd->parsed()) return run_relabel(rl);
        if (ts_cmd->parsed()) return run_train_state_un(ts);
        if (tm_cmd->parsed()) return run_train_mcts_un(tm);
        if (cc_cmd->parsed()) return run_choose_checkpoint(cc);
        if (vt_cmd->parsed()) return run_validate_thresholds(vt);
        if (mt_cmd->parsed()) return run_match(mt);
        if (mr_cmd->parsed()) return run_msc_report(mr);
        if (gp_cmd->parsed()) return run_gtp(gp);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
