#pragma once

#include <span>

#include <Eigen/Core>

#include "playertrack/association/association.hpp"

namespace playertrack {

/// Greedy assignment over per-tracklet class probabilities (`probabilities`
/// is N_t x N_c, rows in tracklet order). Repeatedly takes the highest
/// remaining (tracklet, identity) pair; identity 0 is always accepted, any
/// other identity only if none of its tracklets overlaps in time. Annotated
/// tracklets keep their label. Ties are broken by lower tracklet index, then
/// lower identity.
Association associate_iterative(const Eigen::MatrixXd& probabilities, std::span<const Tracklet> tracklets,
                                std::span<const Annotation> annotations);

/// Row-wise softmax of raw classifier scores.
Eigen::MatrixXd softmax_scores(const Eigen::MatrixXd& scores);

}  // namespace playertrack
