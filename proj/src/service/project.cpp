#include "playertrack/service/project.hpp"

#include <algorithm>

#include "playertrack/association/iterative.hpp"
#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"
#include "playertrack/core/log.hpp"
#include "playertrack/reid/checkpoint.hpp"
#include "playertrack/tracklet/tracklet_generator.hpp"

namespace playertrack {

nlohmann::json to_json(const ProjectState& s) {
    return {{"v", io::kSchemaVersion},
            {"round", s.round},
            {"checkpoint", s.checkpoint},
            {"checkpoint_hash", s.checkpoint_hash},
            {"checkpoint_round", s.checkpoint_round},
            {"checkpoint_alpha", s.checkpoint_alpha},
            {"associations", s.associations}};
}

ProjectState project_state_from_json(const nlohmann::json& j) {
    if (j.at("v").get<int>() != io::kSchemaVersion) throw FormatError("unsupported project state version");
    ProjectState s;
    s.round = j.at("round").get<int>();
    s.checkpoint = j.value("checkpoint", std::string());
    s.checkpoint_hash = j.value("checkpoint_hash", std::string());
    s.checkpoint_round = j.value("checkpoint_round", 0);
    s.checkpoint_alpha = j.value("checkpoint_alpha", 0);
    s.associations = j.value("associations", 0);
    return s;
}

const std::vector<double>* ScoreTable::find(TrackletId id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    return it == ids.end() ? nullptr : &probabilities[static_cast<std::size_t>(it - ids.begin())];
}

nlohmann::json to_json(const ScoreTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < t.ids.size(); ++i) rows.push_back({{"id", t.ids[i]}, {"scores", t.probabilities[i]}});
    return {{"v", io::kSchemaVersion}, {"checkpoint", t.checkpoint_hash}, {"tracklets", std::move(rows)}};
}

ScoreTable score_table_from_json(const nlohmann::json& j) {
    if (j.at("v").get<int>() != io::kSchemaVersion) throw FormatError("unsupported score table version");
    ScoreTable t;
    t.checkpoint_hash = j.at("checkpoint").get<std::string>();
    for (const auto& row : j.at("tracklets")) {
        t.ids.push_back(row.at("id").get<TrackletId>());
        t.probabilities.push_back(row.at("scores").get<std::vector<double>>());
    }
    return t;
}

ProjectStore::ProjectStore(const fs::path& dir) : paths_{dir} {}

ProjectStore ProjectStore::open(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("project directory " + dir.string() + " does not exist");
    ProjectStore p(dir);
    p.config_ = io::load_config(p.paths_.config());
    p.config_.validate();
    p.detections_ = io::load_detections(p.paths_.detections(), p.config_.min_confidence);
    p.embeddings_ = io::load_embeddings(p.paths_.embeddings(), static_cast<std::size_t>(p.config_.d1));
    for (const auto& d : p.detections_) {
        if (d.embedding_row >= p.embeddings_.rows())
            throw FormatError("detections.csv has more rows than embeddings.bin");
    }
    if (fs::exists(p.paths_.tracklets())) {
        p.tracklets_ = io::load_tracklets(p.paths_.tracklets());
    } else {
        p.tracklets_ = generate_tracklets(p.detections_, TrackletGenParams::from(p.config_));
        io::save_tracklets(p.paths_.tracklets(), p.tracklets_);
    }
    if (fs::exists(p.paths_.annotations())) p.annotations_ = io::load_annotations(p.paths_.annotations());
    if (fs::exists(p.paths_.ground_truth())) p.ground_truth_ = io::load_ground_truth(p.paths_.ground_truth());
    if (fs::exists(p.paths_.state())) p.state_ = project_state_from_json(io::read_json(p.paths_.state()));
    return p;
}

const Tracklet* ProjectStore::find_tracklet(TrackletId id) const {
    auto it = std::lower_bound(tracklets_.begin(), tracklets_.end(), id,
                               [](const Tracklet& t, TrackletId v) { return t.id < v; });
    if (it != tracklets_.end() && it->id == id) return &*it;
    // Ids are assigned in order, but a hand-edited file may not be sorted.
    for (const auto& t : tracklets_) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

std::vector<Annotation> ProjectStore::annotations() const { return io::latest_annotations(annotations_); }

bool ProjectStore::has_frames() const { return fs::is_directory(paths_.frames()); }

void ProjectStore::save_state() const { io::write_json(paths_.state(), to_json(state_)); }

Annotation ProjectStore::annotate(TrackletId tracklet_id, Identity identity) {
    if (!find_tracklet(tracklet_id)) throw InvalidArgument("unknown tracklet " + std::to_string(tracklet_id));
    if (identity < 0 || identity > config_.n_players) {
        throw InvalidArgument("identity " + std::to_string(identity) + " outside [0, " +
                              std::to_string(config_.n_players) + "]");
    }
    const Annotation a{tracklet_id, identity, state_.round + 1};
    auto log = annotations_;
    log.push_back(a);
    io::save_annotations(paths_.annotations(), log);
    annotations_ = std::move(log);
    return a;
}

int ProjectStore::begin_round() {
    ++state_.round;
    save_state();
    return state_.round;
}

TrainOutcome ProjectStore::train(int round, int alpha, std::uint64_t seed,
                                 std::function<void(const nn::EpochLoss&)> on_epoch,
                                 const std::atomic<bool>* cancel) {
    nn::TrainOptions options;
    options.settings = config_.training;
    options.alpha = alpha;
    options.seed = seed;
    options.on_epoch = std::move(on_epoch);
    options.cancel = cancel;
    const auto result = nn::train(tracklets_, embeddings_, annotations(), config_, options);
    return commit_training(round, result);
}

TrainOutcome ProjectStore::commit_training(int round, const nn::TrainResult<float>& result) {
    fs::create_directories(paths_.checkpoints());
    const std::string name = "round-" + std::to_string(round) + ".ckpt";
    const auto bytes = nn::encode_checkpoint(config_, result.params);
    io::write_file_atomic(paths_.checkpoints() / name, bytes);
    const std::string hash = nn::content_hash(bytes);

    const auto outputs = nn::infer_all(tracklets_, embeddings_, result.params);
    ScoreTable table;
    table.checkpoint_hash = hash;
    if (!outputs.empty()) {
        const Eigen::MatrixXd p = softmax_scores(score_matrix(outputs));
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            table.ids.push_back(outputs[i].tracklet_id);
            const Eigen::RowVectorXd row = p.row(static_cast<Eigen::Index>(i));
            table.probabilities.emplace_back(row.data(), row.data() + row.size());
        }
    }
    io::write_json(paths_.checkpoints() / ("round-" + std::to_string(round) + ".scores.json"), to_json(table));
    nn::write_loss_curve_csv(paths_.checkpoints() / ("round-" + std::to_string(round) + ".loss.csv"), result.curve);

    state_.checkpoint = name;
    state_.checkpoint_hash = hash;
    state_.checkpoint_round = round;
    state_.checkpoint_alpha = result.alpha;
    save_state();
    return {round, result.alpha, name, hash, result.curve};
}

Association ProjectStore::associate(AssociationMethod method) {
    if (state_.checkpoint.empty()) throw Error("no trained model yet; run training first");
    const auto bytes = io::read_file(paths_.checkpoints() / state_.checkpoint);
    const auto ckpt = nn::decode_checkpoint(bytes);
    if (alpha_for(method) != state_.checkpoint_alpha) {
        log::warn("latest checkpoint was trained with alpha " + std::to_string(state_.checkpoint_alpha) + ", " +
                  to_string(method) + " association expects alpha " + std::to_string(alpha_for(method)));
    }
    const auto outputs = nn::infer_all(tracklets_, embeddings_, ckpt.params);
    Association a = playertrack::associate(method, tracklets_, outputs, annotations(), config_);
    a.checkpoint = nn::content_hash(bytes);
    a.round = state_.checkpoint_round;

    fs::create_directories(paths_.associations());
    const int index = state_.associations + 1;
    save_association(paths_.associations() / ("association-" + std::to_string(index) + ".json"), a);
    state_.associations = index;
    save_state();
    return a;
}

std::optional<Association> ProjectStore::latest_association() const {
    if (state_.associations == 0) return std::nullopt;
    return load_association(paths_.associations() /
                            ("association-" + std::to_string(state_.associations) + ".json"));
}

std::optional<ScoreTable> ProjectStore::latest_scores() const {
    if (state_.checkpoint.empty()) return std::nullopt;
    const fs::path path =
        paths_.checkpoints() / ("round-" + std::to_string(state_.checkpoint_round) + ".scores.json");
    if (!fs::exists(path)) return std::nullopt;
    return score_table_from_json(io::read_json(path));
}

MetricsReport ProjectStore::metrics() const {
    if (!ground_truth_) throw Error("project has no ground truth (gt.csv)");
    const auto a = latest_association();
    if (!a) throw Error("no association yet; run association first");
    return evaluate_team(*ground_truth_, hypothesis_boxes(tracklets_, *a), config_.n_players);
}

}  // namespace playertrack
