#include "playertrack/pipeline/pipeline.hpp"

#include <chrono>

#include "playertrack/association/iterative.hpp"
#include "playertrack/association/rnmf.hpp"
#include "playertrack/association/similarity.hpp"
#include "playertrack/core/error.hpp"
#include "playertrack/tracklet/tracklet_generator.hpp"

namespace playertrack {

std::string to_string(AssociationMethod m) { return m == AssociationMethod::rnmf ? "rnmf" : "iterative"; }

AssociationMethod association_method_from_string(const std::string& s) {
    if (s == "iterative") return AssociationMethod::iterative;
    if (s == "rnmf") return AssociationMethod::rnmf;
    throw InvalidArgument("unknown association method '" + s + "' (expected iterative or rnmf)");
}

Eigen::MatrixXd score_matrix(std::span<const nn::TrackletOutput> outputs) {
    if (outputs.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(outputs.size()), outputs.front().scores.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = outputs[i].scores.cast<double>();
    return m;
}

Eigen::MatrixXd feature_matrix(std::span<const nn::TrackletOutput> outputs) {
    if (outputs.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(outputs.size()), outputs.front().features.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = outputs[i].features.cast<double>();
    return m;
}

Association associate(AssociationMethod method, std::span<const Tracklet> tracklets,
                      std::span<const nn::TrackletOutput> outputs, std::span<const Annotation> annotations,
                      const ProjectConfig& config) {
    if (outputs.size() != tracklets.size()) throw InvalidArgument("associate: need one model output per tracklet");
    if (method == AssociationMethod::iterative) {
        const Eigen::MatrixXd p = tracklets.empty()
                                      ? Eigen::MatrixXd(0, config.n_classes())
                                      : softmax_scores(score_matrix(outputs));
        return associate_iterative(p, tracklets, annotations);
    }
    const SimilarityMatrix s = build_similarity(
        tracklets, tracklets.empty() ? Eigen::MatrixXd(0, config.d2) : feature_matrix(outputs), config);
    RnmfOptions options;
    options.iterations = config.rnmf_iterations;
    options.seed = config.seed;
    const RnmfResult r = rnmf_factorize(s, config.n_players, annotations, options);
    return associate_rnmf(r.a, tracklets, annotations, config.theta_0);
}

std::vector<GroundTruthBox> hypothesis_boxes(std::span<const Tracklet> tracklets, const Association& association) {
    std::vector<GroundTruthBox> out;
    for (const auto& t : tracklets) {
        const auto* e = association.find(t.id);
        if (!e || e->identity == 0) continue;
        for (const auto& d : t.detections) out.push_back({d.frame, e->identity, d.box});
    }
    return out;
}

ProtocolResult run_protocol(const sim::SimConfig& sim_config, const ProjectConfig& config,
                            const ProtocolOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    auto say = [&](const std::string& msg) {
        if (options.progress) options.progress(msg);
    };

    const sim::SimulatedGame game = sim::simulate(sim_config);
    const auto tracklets = generate_tracklets(game.detections, TrackletGenParams::from(config));
    const auto truth = sim::tracklet_truth(tracklets, game.ground_truth);

    ProtocolResult result;
    result.seed = sim_config.seed;
    result.tracklets = static_cast<int>(tracklets.size());
    say("seed " + std::to_string(sim_config.seed) + ": " + std::to_string(tracklets.size()) + " tracklets");

    auto train_and_associate = [&](const std::vector<Annotation>& annotations, AssociationMethod method) {
        nn::TrainOptions train_options;
        train_options.settings = config.training;
        train_options.alpha = alpha_for(method);
        train_options.seed = options.train_seed;
        const auto trained = nn::train(tracklets, game.embeddings, annotations, config, train_options);
        const auto outputs = nn::infer_all(tracklets, game.embeddings, trained.params);
        return associate(method, tracklets, outputs, annotations, config);
    };
    auto score = [&](const Association& a) {
        return evaluate_team(game.ground_truth, hypothesis_boxes(tracklets, a), config.n_players);
    };

    std::vector<Annotation> annotations;
    std::optional<Association> current;
    for (int round = 1; round <= options.rounds; ++round) {
        auto added = sim::oracle_round(tracklets, truth, config.n_players, annotations,
                                       current ? &*current : nullptr, round, options.budget);
        annotations.insert(annotations.end(), added.begin(), added.end());
        current = train_and_associate(annotations, AssociationMethod::iterative);
        RoundResult rr{round, static_cast<int>(annotations.size()), score(*current)};
        say("  round " + std::to_string(round) + ": IDF1 " + std::to_string(rr.iterative.idf1) + ", MOTA " +
            std::to_string(rr.iterative.mota) + ", IDs " + std::to_string(rr.iterative.idsw));
        result.rounds.push_back(rr);
    }
    if (options.run_rnmf && !annotations.empty()) {
        result.rnmf = score(train_and_associate(annotations, AssociationMethod::rnmf));
        say("  rnmf: IDF1 " + std::to_string(result.rnmf->idf1) + ", MOTA " + std::to_string(result.rnmf->mota) +
            ", IDs " + std::to_string(result.rnmf->idsw));
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

nlohmann::json to_json(const ProtocolResult& r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& rr : r.rounds) {
        rounds.push_back({{"round", rr.round}, {"annotations", rr.annotations}, {"iterative", to_json(rr.iterative)}});
    }
    nlohmann::json j{{"seed", r.seed}, {"tracklets", r.tracklets}, {"rounds", std::move(rounds)}, {"seconds", r.seconds}};
    j["rnmf"] = r.rnmf ? to_json(*r.rnmf) : nlohmann::json(nullptr);
    return j;
}

}  // namespace playertrack
