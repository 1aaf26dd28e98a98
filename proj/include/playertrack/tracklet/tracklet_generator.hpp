#pragma once

#include <span>
#include <vector>

#include "playertrack/core/types.hpp"
#include "playertrack/tracklet/kalman.hpp"

namespace playertrack {

struct TrackletGenParams {
    double iou_min = 0.3;  // association gate against the predicted box
    double mu = 0.5;       // split threshold between two active tracks
    int l_min = 10;
    KalmanParams kalman;

    static TrackletGenParams from(const ProjectConfig& config) {
        return {config.iou_min, config.mu, config.l_min, {}};
    }
};

/// Builds non-ambiguous tracklets from frame-sorted detections.
///
/// Per frame: predict every active track, match by Hungarian on 1 - IoU with
/// pairs below `iou_min` forbidden, extend matched tracks, start tracks for
/// unmatched detections and end unmatched tracks. Any two active tracks whose
/// current boxes overlap with IoU >= mu are both cut: the part up to the
/// previous frame is emitted and a new track starts at the current detection.
/// Tracklets shorter than `l_min` are dropped. Ids are assigned in order of
/// (first frame, first embedding row).
std::vector<Tracklet> generate_tracklets(std::span<const Detection> detections, const TrackletGenParams& params);

}  // namespace playertrack
