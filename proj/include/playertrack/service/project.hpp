#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "playertrack/association/association.hpp"
#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/types.hpp"
#include "playertrack/pipeline/pipeline.hpp"
#include "playertrack/reid/trainer.hpp"

namespace playertrack {

namespace fs = std::filesystem;

/// File names inside a project directory.
struct ProjectPaths {
    fs::path root;

    fs::path config() const { return root / "config.json"; }
    fs::path detections() const { return root / "detections.csv"; }
    fs::path embeddings() const { return root / "embeddings.bin"; }
    fs::path ground_truth() const { return root / "gt.csv"; }
    fs::path frames() const { return root / "frames"; }
    fs::path tracklets() const { return root / "tracklets.json"; }
    fs::path annotations() const { return root / "annotations.json"; }
    fs::path checkpoints() const { return root / "checkpoints"; }
    fs::path associations() const { return root / "associations"; }
    fs::path state() const { return root / "state.json"; }
    fs::path jobs() const { return root / "jobs.json"; }
    fs::path simulation() const { return root / "simulation.json"; }
};

/// Persistent bookkeeping: `round` counts training runs started so far.
struct ProjectState {
    int round = 0;
    std::string checkpoint;       // file name under checkpoints/, empty before the first run
    std::string checkpoint_hash;  // content hash of that file
    int checkpoint_round = 0;     // round that produced the checkpoint
    int checkpoint_alpha = 0;
    int associations = 0;  // number of association files written
};

/// Per-tracklet class probabilities of the model behind a checkpoint.
struct ScoreTable {
    std::string checkpoint_hash;
    std::vector<TrackletId> ids;
    std::vector<std::vector<double>> probabilities;

    const std::vector<double>* find(TrackletId id) const;
};

struct TrainOutcome {
    int round = 0;
    int alpha = 0;  // alpha actually used
    std::string checkpoint;
    std::string checkpoint_hash;
    std::vector<nn::EpochLoss> curve;
};

/// On-disk project. Every mutation is written through atomically before the
/// call returns. Not thread-safe; the server serializes access.
class ProjectStore {
public:
    /// Loads a project, generating and saving tracklets.json if it is missing.
    static ProjectStore open(const fs::path& dir);

    const ProjectPaths& paths() const { return paths_; }
    const ProjectConfig& config() const { return config_; }
    const std::vector<Detection>& detections() const { return detections_; }
    const EmbeddingMatrix& embeddings() const { return embeddings_; }
    const std::vector<Tracklet>& tracklets() const { return tracklets_; }
    const Tracklet* find_tracklet(TrackletId id) const;
    const std::vector<Annotation>& annotation_log() const { return annotations_; }
    std::vector<Annotation> annotations() const;  // latest label per tracklet
    const std::optional<std::vector<GroundTruthBox>>& ground_truth() const { return ground_truth_; }
    const ProjectState& state() const { return state_; }
    bool has_frames() const;

    /// Validates and appends an annotation for the upcoming round. Throws
    /// InvalidArgument for an unknown tracklet or an identity outside [0, N_p].
    Annotation annotate(TrackletId tracklet_id, Identity identity);

    /// Claims the next round number and persists it.
    int begin_round();

    /// Trains on the current annotations and makes the result the latest
    /// checkpoint. `round` comes from begin_round().
    TrainOutcome train(int round, int alpha, std::uint64_t seed,
                       std::function<void(const nn::EpochLoss&)> on_epoch = {},
                       const std::atomic<bool>* cancel = nullptr);

    /// Second half of train(): writes the checkpoint, its score table and loss
    /// curve, then updates the state. Lets a caller train without holding a lock
    /// (config, tracklets and embeddings never change after open()).
    TrainOutcome commit_training(int round, const nn::TrainResult<float>& result);

    /// Associates every tracklet with the latest checkpoint and persists the
    /// result. Throws Error when no checkpoint exists.
    Association associate(AssociationMethod method);

    std::optional<Association> latest_association() const;
    std::optional<ScoreTable> latest_scores() const;

    /// Team-filtered metrics of the latest association. Throws Error when the
    /// project has no ground truth or no association.
    MetricsReport metrics() const;

private:
    explicit ProjectStore(const fs::path& dir);
    void save_state() const;

    ProjectPaths paths_;
    ProjectConfig config_;
    std::vector<Detection> detections_;
    EmbeddingMatrix embeddings_;
    std::vector<Tracklet> tracklets_;
    std::vector<Annotation> annotations_;
    std::optional<std::vector<GroundTruthBox>> ground_truth_;
    ProjectState state_;
};

nlohmann::json to_json(const ProjectState& s);
ProjectState project_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScoreTable& t);
ScoreTable score_table_from_json(const nlohmann::json& j);

}  // namespace playertrack
