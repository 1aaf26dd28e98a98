#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack::sim {

/// Synthetic game. Ground-truth identities are 1..players_per_team for the
/// first team, the next block for the second team, then distractors.
struct SimConfig {
    int players_per_team = 7;
    int teams = 2;
    int distractors = 3;
    int frames = 1500;
    double fps = 50.0;

    double field_width = 1920.0;
    double field_height = 1080.0;
    double box_height_min = 90.0;   // at the top of the field
    double box_height_max = 150.0;  // at the bottom of the field
    double box_aspect = 0.4;        // width / height

    double speed_min = 0.5;  // pixels per frame
    double speed_max = 4.0;

    // 0 keeps every person in a private vertical lane so boxes never meet;
    // 1 lets everyone roam the whole field.
    double occlusion_rate = 0.35;
    double occlusion_iou = 0.3;  // the farther detection is dropped at or above this
    double occlusion_mixing = 0.5;

    double exit_rate = 0.0005;  // per frame
    int reentry_min = 50;
    int reentry_max = 250;

    std::size_t embedding_dim = 2048;
    double identity_correlation = 0.5;  // expected cosine between same-team identities
    double embedding_noise = 0.5;       // within-identity noise norm relative to the unit mean

    double drop_probability = 0.005;
    double box_jitter = 1.5;
    double confidence_noise = 0.05;

    std::uint64_t seed = 0;

    int people() const { return teams * players_per_team + distractors; }
    void validate() const;
};

nlohmann::json to_json(const SimConfig& c);
/// Missing keys keep their defaults.
SimConfig sim_config_from_json(const nlohmann::json& j);

/// A maximal run of consecutive frames in which a person was detected.
struct Segment {
    int identity = 0;
    int first_frame = 0;
    int last_frame = 0;
    int length() const { return last_frame - first_frame + 1; }
};

struct SimulatedGame {
    std::vector<Detection> detections;       // frame order; embedding_row = index
    std::vector<int> detection_identity;     // true identity per detection
    EmbeddingMatrix embeddings;
    std::vector<GroundTruthBox> ground_truth;  // every on-field person, every frame
    std::vector<Segment> segments;
};

SimulatedGame simulate(const SimConfig& config);

/// Project config matching the simulated game (N_p, fps, d1); other fields
/// keep their defaults.
ProjectConfig project_config_for(const SimConfig& config);

/// Writes config.json, detections.csv, embeddings.bin, gt.csv and
/// simulation.json into `dir`, creating it if needed.
void write_project(const std::filesystem::path& dir, const SimulatedGame& game, const ProjectConfig& project,
                   const SimConfig& config);

}  // namespace playertrack::sim
