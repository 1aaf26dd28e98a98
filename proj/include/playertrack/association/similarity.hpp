#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "playertrack/core/types.hpp"

namespace playertrack {

inline constexpr double kSelfSimilarity = 2.0;

/// Pairwise tracklet similarity in [0, 2], rows/columns in `ids` order. The
/// diagonal holds kSelfSimilarity by convention.
struct SimilarityMatrix {
    Eigen::MatrixXd values;
    std::vector<TrackletId> ids;
};

/// 1 - cosine_distance(u, v) / eta_app; unclipped, may be negative.
/// Throws InvalidArgument for a zero-norm vector.
double psi_app(const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v,
               double eta_app);

/// Localization term between the last box of an earlier tracklet (at time
/// `end_time`, seconds) and the first box of a later one (at `start_time`):
/// (1 + eta_loc) * IoU - eta_loc when the gap is at most tau, else 0.
double psi_loc(const BoundingBox& last_box, const BoundingBox& first_box, double end_time, double start_time,
               double eta_loc, double tau);

/// S(u, v) = clip(psi_app) + clip(psi_loc). psi_loc is evaluated with the
/// earlier-ending tracklet first and is 0 for tracklets that overlap in time.
/// `features` has one row per tracklet.
SimilarityMatrix build_similarity(std::span<const Tracklet> tracklets, const Eigen::MatrixXd& features,
                                  const ProjectConfig& config);

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& s);

}  // namespace playertrack
