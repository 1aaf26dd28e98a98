#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "playertrack/association/association.hpp"
#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/types.hpp"
#include "playertrack/metrics/metrics.hpp"
#include "playertrack/reid/trainer.hpp"
#include "playertrack/simulate/oracle.hpp"
#include "playertrack/simulate/simulator.hpp"

namespace playertrack {

enum class AssociationMethod { iterative, rnmf };

std::string to_string(AssociationMethod m);
/// Throws InvalidArgument for anything but "iterative" or "rnmf".
AssociationMethod association_method_from_string(const std::string& s);

/// Loss weight the model should be trained with for a given association.
inline int alpha_for(AssociationMethod m) { return m == AssociationMethod::rnmf ? 1 : 0; }

Eigen::MatrixXd score_matrix(std::span<const nn::TrackletOutput> outputs);
Eigen::MatrixXd feature_matrix(std::span<const nn::TrackletOutput> outputs);

/// Runs the chosen association on model outputs (one per tracklet, same order).
Association associate(AssociationMethod method, std::span<const Tracklet> tracklets,
                      std::span<const nn::TrackletOutput> outputs, std::span<const Annotation> annotations,
                      const ProjectConfig& config);

/// Boxes of every tracklet associated to a nonzero identity, labelled with it.
std::vector<GroundTruthBox> hypothesis_boxes(std::span<const Tracklet> tracklets, const Association& association);

/// Simulated annotation rounds on one synthetic game: each round adds the
/// oracle's annotations, retrains from scratch with alpha 0 and associates
/// iteratively. After the last round a model trained with alpha 1 is used for
/// the matrix-factorization association.
struct ProtocolOptions {
    int rounds = 4;
    sim::OracleBudget budget;
    bool run_rnmf = true;
    std::uint64_t train_seed = 0;
    std::function<void(const std::string&)> progress;  // may be empty
};

struct RoundResult {
    int round = 0;
    int annotations = 0;
    MetricsReport iterative;
};

struct ProtocolResult {
    std::uint64_t seed = 0;
    int tracklets = 0;
    std::vector<RoundResult> rounds;
    std::optional<MetricsReport> rnmf;
    double seconds = 0.0;
};

ProtocolResult run_protocol(const sim::SimConfig& sim_config, const ProjectConfig& config,
                            const ProtocolOptions& options);

nlohmann::json to_json(const ProtocolResult& r);

}  // namespace playertrack
