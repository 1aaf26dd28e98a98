#pragma once

#include <span>
#include <vector>

#include "playertrack/association/association.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack::sim {

/// Majority ground-truth identity of a tracklet. Each detection votes for the
/// ground-truth box of its frame with the highest IoU (>= 0.5); detections
/// without such a box vote for 0.
struct TrackletTruth {
    TrackletId id = 0;
    int identity = 0;
    double purity = 0.0;  // fraction of detections voting for `identity`
};

std::vector<TrackletTruth> tracklet_truth(std::span<const Tracklet> tracklets,
                                          std::span<const GroundTruthBox> ground_truth);

/// Annotation identity the simulated user gives a tracklet: its ground-truth
/// identity when that is a player of the tracked team, else 0.
inline Identity oracle_label(const TrackletTruth& t, int n_players) {
    return t.identity >= 1 && t.identity <= n_players ? t.identity : 0;
}

struct OracleBudget {
    int per_player = 1;
    int class_zero = 2;
};

/// One round of simulated user annotations. For each player, and then for
/// class 0, picks not-yet-annotated tracklets with that label. When a current
/// association is given, tracklets it gets wrong come first; ties go to the
/// longer tracklet, then the lower id.
std::vector<Annotation> oracle_round(std::span<const Tracklet> tracklets, std::span<const TrackletTruth> truth,
                                     int n_players, std::span<const Annotation> existing,
                                     const Association* current, int round, OracleBudget budget = {});

}  // namespace playertrack::sim
