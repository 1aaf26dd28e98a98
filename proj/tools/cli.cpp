#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"
#include "playertrack/core/log.hpp"
#include "playertrack/pipeline/pipeline.hpp"
#include "playertrack/reid/gradcheck.hpp"
#include "playertrack/service/project.hpp"
#include "playertrack/service/server.hpp"
#include "playertrack/simulate/simulator.hpp"
#include "playertrack/tracklet/tracklet_generator.hpp"

namespace playertrack::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Common {
    bool json = false;
    bool quiet = false;
    bool verbose = false;
};

void emit(std::ostream& out, const Common& c, json body, const std::string& text) {
    if (c.json) {
        body["v"] = io::kSchemaVersion;
        out << body.dump(2) << '\n';
    } else {
        out << text;
    }
}

void require_project(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("project directory " + dir.string() + " does not exist");
}

struct Spread {
    double mean = 0.0;
    double std = 0.0;
};

// Sample standard deviation; zero for a single value.
Spread spread(const std::vector<double>& v) {
    Spread s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

json spread_json(const Spread& s) { return {{"mean", s.mean}, {"std", s.std}}; }

struct Summary {
    Spread idf1, mota, idsw;
};

Summary summarize(const std::vector<MetricsReport>& reports) {
    std::vector<double> idf1, mota, idsw;
    for (const auto& r : reports) {
        idf1.push_back(r.idf1);
        mota.push_back(r.mota);
        idsw.push_back(static_cast<double>(r.idsw));
    }
    return {spread(idf1), spread(mota), spread(idsw)};
}

json summary_json(const Summary& s) {
    return {{"idf1", spread_json(s.idf1)}, {"mota", spread_json(s.mota)}, {"idsw", spread_json(s.idsw)}};
}

std::string summary_row(const std::string& label, const Summary& s, std::size_t width) {
    std::ostringstream o;
    o << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::fixed << std::setprecision(1)
      << std::setw(7) << 100.0 * s.idf1.mean << " ± " << std::setw(4) << 100.0 * s.idf1.std << std::setw(8)
      << s.idsw.mean << " ± " << std::setw(4) << s.idsw.std << std::setw(8) << 100.0 * s.mota.mean << " ± "
      << std::setw(4) << 100.0 * s.mota.std << '\n';
    return o.str();
}

sim::SimConfig load_sim_config(const std::string& path) {
    sim::SimConfig c;
    if (!path.empty()) c = sim::sim_config_from_json(io::read_json(path));
    return c;
}

int cmd_simulate(const Common& c, const std::string& config_path, const fs::path& out_dir,
                 std::optional<std::uint64_t> seed, std::ostream& out) {
    auto config = load_sim_config(config_path);
    if (seed) config.seed = *seed;
    config.validate();
    const auto game = sim::simulate(config);
    auto project = sim::project_config_for(config);
    project.seed = config.seed;
    sim::write_project(out_dir, game, project, config);

    std::ostringstream text;
    text << "wrote " << out_dir.string() << ": " << game.detections.size() << " detections, " << config.people()
         << " people, " << game.segments.size() << " track segments, " << config.frames << " frames\n";
    emit(out, c,
         {{"project", out_dir.string()},
          {"seed", config.seed},
          {"detections", game.detections.size()},
          {"people", config.people()},
          {"segments", game.segments.size()},
          {"frames", config.frames}},
         text.str());
    return 0;
}

int cmd_tracklets(const Common& c, const fs::path& dir, std::ostream& out) {
    require_project(dir);
    const ProjectPaths paths{dir};
    const auto config = io::load_config(paths.config());
    config.validate();
    const auto detections = io::load_detections(paths.detections(), config.min_confidence);
    const auto tracklets = generate_tracklets(detections, TrackletGenParams::from(config));
    io::save_tracklets(paths.tracklets(), tracklets);

    std::size_t covered = 0;
    for (const auto& t : tracklets) covered += t.length();
    const double mean = tracklets.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(tracklets.size());
    std::ostringstream text;
    text << tracklets.size() << " tracklets, mean length " << std::fixed << std::setprecision(1) << mean << ", "
         << covered << " of " << detections.size() << " detections covered\n";
    emit(out, c,
         {{"tracklets", tracklets.size()},
          {"mean_length", mean},
          {"detections", detections.size()},
          {"covered", covered}},
         text.str());
    return 0;
}

int cmd_annotate(const Common& c, const fs::path& dir, TrackletId tracklet_id, Identity identity, std::ostream& out) {
    require_project(dir);
    auto store = ProjectStore::open(dir);
    const auto a = store.annotate(tracklet_id, identity);
    std::ostringstream text;
    text << "tracklet " << a.tracklet_id << " -> identity " << a.identity << " (round " << a.round << ")\n";
    emit(out, c, {{"tracklet_id", a.tracklet_id}, {"identity", a.identity}, {"round", a.round}}, text.str());
    return 0;
}

int cmd_train(const Common& c, const fs::path& dir, int alpha, std::optional<std::uint64_t> seed, std::ostream& out) {
    require_project(dir);
    auto store = ProjectStore::open(dir);
    if (store.annotations().empty()) throw InvalidArgument("no annotations to train on");
    const int round = store.begin_round();
    const auto outcome = store.train(round, alpha, seed.value_or(store.config().seed), [&](const nn::EpochLoss& e) {
        log::debug("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.total));
    });
    const double final_loss = outcome.curve.empty() ? 0.0 : outcome.curve.back().total;
    std::ostringstream text;
    text << "round " << outcome.round << ": trained on " << store.annotations().size()
         << " annotated tracklets, alpha " << outcome.alpha << ", final loss " << std::setprecision(6) << final_loss
         << "\ncheckpoint " << outcome.checkpoint << " (" << outcome.checkpoint_hash << ")\n";
    emit(out, c,
         {{"round", outcome.round},
          {"alpha", outcome.alpha},
          {"annotations", store.annotations().size()},
          {"checkpoint", outcome.checkpoint},
          {"checkpoint_hash", outcome.checkpoint_hash},
          {"final_loss", final_loss},
          {"epochs", outcome.curve.size()}},
         text.str());
    return 0;
}

int cmd_associate(const Common& c, const fs::path& dir, const std::string& method_name, std::ostream& out) {
    require_project(dir);
    const auto method = association_method_from_string(method_name);
    auto store = ProjectStore::open(dir);
    const auto a = store.associate(method);

    std::vector<int> per_identity(static_cast<std::size_t>(store.config().n_players) + 1, 0);
    for (const auto& e : a.entries) {
        if (e.identity >= 0 && e.identity <= store.config().n_players) ++per_identity[static_cast<std::size_t>(e.identity)];
    }
    std::ostringstream text;
    text << a.method << " association of " << a.entries.size() << " tracklets with checkpoint " << a.checkpoint
         << " (round " << a.round << ")\n";
    for (std::size_t i = 0; i < per_identity.size(); ++i) {
        text << "  identity " << std::setw(2) << i << ": " << per_identity[i] << " tracklets\n";
    }
    json body = to_json(a);
    body["per_identity"] = per_identity;
    emit(out, c, body, text.str());
    return 0;
}

int cmd_evaluate_project(const Common& c, const fs::path& dir, const std::string& hyp_path, bool all_identities,
                         std::ostream& out) {
    require_project(dir);
    const ProjectPaths paths{dir};
    if (!fs::exists(paths.ground_truth())) throw Error("project has no ground truth (gt.csv)");
    const auto config = io::load_config(paths.config());
    const auto gt = io::load_ground_truth(paths.ground_truth());

    std::vector<GroundTruthBox> hyp;
    std::string label;
    if (!hyp_path.empty()) {
        hyp = io::load_ground_truth(hyp_path);
        label = fs::path(hyp_path).filename().string();
    } else {
        auto store = ProjectStore::open(dir);
        const auto a = store.latest_association();
        if (!a) throw Error("no association yet; run associate first");
        hyp = hypothesis_boxes(store.tracklets(), *a);
        label = a->method;
    }
    const auto report = all_identities ? evaluate(gt, hyp) : evaluate_team(gt, hyp, config.n_players);
    const std::pair<std::string, MetricsReport> row{label, report};
    json body = to_json(report);
    body["label"] = label;
    emit(out, c, body, format_table(std::span(&row, 1)));
    return 0;
}

int cmd_evaluate_seeds(const Common& c, const std::string& sim_path, int seeds, std::uint64_t first_seed, int rounds,
                       bool rnmf, std::ostream& out, std::ostream& err) {
    if (seeds < 1) throw InvalidArgument("--seeds must be at least 1");
    const auto base = load_sim_config(sim_path);
    std::vector<ProtocolResult> results;
    for (int k = 0; k < seeds; ++k) {
        auto sc = base;
        sc.seed = first_seed + static_cast<std::uint64_t>(k);
        auto pc = sim::project_config_for(sc);
        pc.seed = sc.seed;
        ProtocolOptions options;
        options.rounds = rounds;
        options.run_rnmf = rnmf;
        options.train_seed = sc.seed;
        if (!c.quiet && !c.json) options.progress = [&](const std::string& m) { err << "[seed " << sc.seed << "] " << m << '\n'; };
        results.push_back(run_protocol(sc, pc, options));
    }

    std::vector<std::pair<std::string, Summary>> rows;
    json per_round = json::array();
    for (int r = 0; r < rounds; ++r) {
        std::vector<MetricsReport> reports;
        for (const auto& res : results) reports.push_back(res.rounds[static_cast<std::size_t>(r)].iterative);
        const auto s = summarize(reports);
        rows.emplace_back("iterative round " + std::to_string(r + 1), s);
        json j = summary_json(s);
        j["round"] = r + 1;
        j["annotations"] = results.front().rounds[static_cast<std::size_t>(r)].annotations;
        per_round.push_back(std::move(j));
    }
    json body{{"seeds", seeds}, {"first_seed", first_seed}, {"rounds", std::move(per_round)}};
    if (rnmf) {
        std::vector<MetricsReport> reports;
        for (const auto& res : results) reports.push_back(*res.rnmf);
        const auto s = summarize(reports);
        rows.emplace_back("rnmf", s);
        body["rnmf"] = summary_json(s);
    }
    json runs = json::array();
    for (const auto& res : results) runs.push_back(to_json(res));
    body["runs"] = std::move(runs);

    std::size_t width = 6;
    for (const auto& [label, s] : rows) width = std::max(width, label.size());
    std::ostringstream text;
    text << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right << std::setw(14) << "IDF1"
         << std::setw(15) << "IDs" << std::setw(15) << "MOTA" << '\n';
    for (const auto& [label, s] : rows) text << summary_row(label, s, width);
    text << "(mean ± std over " << seeds << " seeds, percent except IDs)\n";
    emit(out, c, body, text.str());
    return 0;
}

int cmd_serve(const Common& c, const fs::path& dir, const std::string& host, int port, std::ostream& out) {
    require_project(dir);
    Server server(dir);
    int bound = port;
    if (port == 0) {
        bound = server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
    }
    g_interrupted = false;
    auto previous_int = std::signal(SIGINT, on_signal);
    auto previous_term = std::signal(SIGTERM, on_signal);
    std::atomic<bool> ok{true};
    std::thread http([&] { ok = port == 0 ? server.listen_after_bind() : server.listen(host, port); });
    server.wait_until_ready();
    if (ok) {
        std::ostringstream text;
        text << "serving " << dir.string() << " on http://" << host << ':' << bound << "/api/\n";
        emit(out, c, {{"host", host}, {"port", bound}, {"project", dir.string()}}, text.str());
        out.flush();
    }
    while (ok && server.is_running() && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    http.join();
    std::signal(SIGINT, previous_int);
    std::signal(SIGTERM, previous_term);
    if (!ok) throw Error("cannot listen on " + host + ':' + std::to_string(port));
    return 0;
}

int cmd_gradcheck(const Common& c, std::uint64_t seed, double tolerance, std::ostream& out) {
    json body{{"tolerance", tolerance}, {"checks", json::array()}};
    std::ostringstream text;
    bool passed = true;
    for (int alpha : {0, 1}) {
        const auto r = nn::gradient_check(alpha, seed);
        passed = passed && r.passed(tolerance);
        json tensors = json::object();
        for (const auto& t : r.tensors) tensors[t.name] = t.max_relative_error;
        body["checks"].push_back({{"alpha", alpha},
                                  {"max_relative_error", r.max_relative_error},
                                  {"worst_tensor", r.worst_tensor},
                                  {"passed", r.passed(tolerance)},
                                  {"tensors", std::move(tensors)}});
        text << "alpha " << alpha << ": max relative error " << std::scientific << std::setprecision(3)
             << r.max_relative_error << " (" << r.worst_tensor << ") " << (r.passed(tolerance) ? "ok" : "FAILED")
             << '\n';
    }
    body["passed"] = passed;
    emit(out, c, body, text.str());
    return passed ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-interactive team-sport player tracking"};
    app.require_subcommand(1);
    Common common;
    app.add_flag("--json", common.json, "Machine-readable JSON output");
    app.add_flag("-q,--quiet", common.quiet, "Only print errors");
    app.add_flag("-v,--verbose", common.verbose, "Print debug messages");

    std::string project;
    auto add_project = [&](CLI::App* sub) {
        sub->add_option("-p,--project", project, "Project directory")->required();
    };

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic game as a project directory");
    std::string sim_config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    simulate->add_option("-c,--config", sim_config, "Simulation config (JSON); defaults otherwise");
    simulate->add_option("-o,--out", out_dir, "Output project directory")->required();
    simulate->add_option("-s,--seed", seed, "Random seed (overrides the config)");

    auto* tracklets = app.add_subcommand("tracklets", "Build tracklets from the project detections");
    add_project(tracklets);

    auto* annotate = app.add_subcommand("annotate", "Label one tracklet with an identity (0 = not tracked)");
    add_project(annotate);
    TrackletId tracklet_id = 0;
    Identity identity = 0;
    annotate->add_option("-t,--tracklet", tracklet_id, "Tracklet id")->required();
    annotate->add_option("-i,--identity", identity, "Identity in [0, N_p]")->required();

    auto* train = app.add_subcommand("train", "Train the re-identification model on the current annotations");
    add_project(train);
    int alpha = 0;
    train->add_option("-a,--alpha", alpha, "Triplet loss weight")->check(CLI::IsMember({0, 1}));
    train->add_option("-s,--seed", seed, "Random seed (defaults to the project seed)");

    auto* associate = app.add_subcommand("associate", "Assign every tracklet to an identity");
    add_project(associate);
    std::string method = "iterative";
    associate->add_option("-m,--method", method, "iterative or rnmf")->check(CLI::IsMember({"iterative", "rnmf"}));

    auto* evaluate = app.add_subcommand("evaluate", "Score tracking output against ground truth");
    std::string hyp;
    bool all_identities = false;
    int seeds = 0;
    std::uint64_t first_seed = 0;
    int rounds = 4;
    bool no_rnmf = false;
    evaluate->add_option("-p,--project", project, "Project directory with gt.csv");
    evaluate->add_option("--hyp", hyp, "Hypothesis file in MOT format instead of the latest association");
    evaluate->add_flag("--all-identities", all_identities, "Score every identity, not only the tracked team");
    evaluate->add_option("--seeds", seeds, "Run the simulated annotation protocol on this many seeds");
    evaluate->add_option("--first-seed", first_seed, "First seed of the protocol runs");
    evaluate->add_option("--rounds", rounds, "Annotation rounds per protocol run")->check(CLI::PositiveNumber);
    evaluate->add_option("-c,--config", sim_config, "Simulation config for the protocol runs");
    evaluate->add_flag("--no-rnmf", no_rnmf, "Skip the matrix-factorization round");

    auto* serve = app.add_subcommand("serve", "Serve the project over HTTP");
    add_project(serve);
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port; 0 picks a free one")->check(CLI::Range(0, 65535));

    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    std::uint64_t check_seed = 0;
    double tolerance = 1e-4;
    gradcheck->add_option("-s,--seed", check_seed, "Random seed");
    gradcheck->add_option("--tolerance", tolerance, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    log::set_level(common.quiet ? log::Level::error : common.verbose ? log::Level::debug : log::Level::info);
    try {
        if (*simulate) return cmd_simulate(common, sim_config, out_dir, seed, out);
        if (*tracklets) return cmd_tracklets(common, project, out);
        if (*annotate) return cmd_annotate(common, project, tracklet_id, identity, out);
        if (*train) return cmd_train(common, project, alpha, seed, out);
        if (*associate) return cmd_associate(common, project, method, out);
        if (*evaluate) {
            if (seeds > 0) return cmd_evaluate_seeds(common, sim_config, seeds, first_seed, rounds, !no_rnmf, out, err);
            if (project.empty()) throw InvalidArgument("evaluate needs --project or --seeds");
            return cmd_evaluate_project(common, project, hyp, all_identities, out);
        }
        if (*serve) return cmd_serve(common, project, host, port, out);
        if (*gradcheck) return cmd_gradcheck(common, check_seed, tolerance, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace playertrack::cli
