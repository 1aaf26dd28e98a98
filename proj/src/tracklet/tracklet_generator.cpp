#include "playertrack/tracklet/tracklet_generator.hpp"

#include <algorithm>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/tracklet/hungarian.hpp"

namespace playertrack {

namespace {

struct ActiveTrack {
    TrackState state;
    std::vector<Detection> detections;
};

BoundingBox predicted_box(const TrackState& s) {
    // Shrinking velocities can drive the predicted size through zero.
    const double w = std::max(s.mean(2), 1e-3);
    const double h = std::max(s.mean(3), 1e-3);
    return BoundingBox::from_center(s.mean(0), s.mean(1), w, h);
}

}  // namespace

std::vector<Tracklet> generate_tracklets(std::span<const Detection> detections, const TrackletGenParams& params) {
    if (!std::is_sorted(detections.begin(), detections.end(),
                        [](const Detection& a, const Detection& b) { return a.frame < b.frame; })) {
        throw InvalidArgument("generate_tracklets: detections must be sorted by frame");
    }

    std::vector<std::vector<Detection>> finished;
    std::vector<ActiveTrack> active;

    auto finish = [&](std::vector<Detection>&& dets) {
        if (static_cast<int>(dets.size()) >= params.l_min) finished.push_back(std::move(dets));
    };

    std::size_t begin = 0;
    while (begin < detections.size()) {
        const int frame = detections[begin].frame;
        std::size_t end = begin;
        while (end < detections.size() && detections[end].frame == frame) ++end;
        const auto frame_dets = detections.subspan(begin, end - begin);
        begin = end;

        // A track is only continued from the immediately preceding frame.
        std::vector<ActiveTrack> carried;
        for (auto& t : active) {
            if (t.detections.back().frame == frame - 1) {
                t.state = kalman_predict(t.state, params.kalman);
                carried.push_back(std::move(t));
            } else {
                finish(std::move(t.detections));
            }
        }
        active.clear();

        Eigen::MatrixXd cost(static_cast<Eigen::Index>(carried.size()), static_cast<Eigen::Index>(frame_dets.size()));
        for (std::size_t i = 0; i < carried.size(); ++i) {
            const BoundingBox pred = predicted_box(carried[i].state);
            for (std::size_t j = 0; j < frame_dets.size(); ++j) {
                const double o = iou(pred, frame_dets[j].box);
                cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    o < params.iou_min ? kForbiddenCost : 1.0 - o;
            }
        }
        const Assignment match = hungarian_assign(cost);

        std::vector<char> track_matched(carried.size(), 0);
        std::vector<char> det_matched(frame_dets.size(), 0);
        for (auto [i, j] : match.pairs) {
            auto& t = carried[static_cast<std::size_t>(i)];
            t.state = kalman_update(t.state, frame_dets[static_cast<std::size_t>(j)].box, params.kalman);
            t.detections.push_back(frame_dets[static_cast<std::size_t>(j)]);
            track_matched[static_cast<std::size_t>(i)] = 1;
            det_matched[static_cast<std::size_t>(j)] = 1;
        }
        for (std::size_t i = 0; i < carried.size(); ++i) {
            if (track_matched[i]) {
                active.push_back(std::move(carried[i]));
            } else {
                finish(std::move(carried[i].detections));
            }
        }
        for (std::size_t j = 0; j < frame_dets.size(); ++j) {
            if (!det_matched[j]) {
                active.push_back({kalman_initiate(frame_dets[j].box, params.kalman), {frame_dets[j]}});
            }
        }

        // Split rule on the current detected boxes.
        std::vector<char> split(active.size(), 0);
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                if (iou(active[a].detections.back().box, active[b].detections.back().box) >= params.mu) {
                    split[a] = split[b] = 1;
                }
            }
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            auto& t = active[a];
            if (!split[a] || t.detections.size() == 1) continue;
            const Detection current = t.detections.back();
            t.detections.pop_back();
            finish(std::move(t.detections));
            t.detections = {current};
            t.state = kalman_initiate(current.box, params.kalman);
        }
    }
    for (auto& t : active) finish(std::move(t.detections));

    std::sort(finished.begin(), finished.end(), [](const auto& a, const auto& b) {
        if (a.front().frame != b.front().frame) return a.front().frame < b.front().frame;
        return a.front().embedding_row < b.front().embedding_row;
    });
    std::vector<Tracklet> out;
    out.reserve(finished.size());
    for (std::size_t i = 0; i < finished.size(); ++i) {
        out.push_back({static_cast<TrackletId>(i), std::move(finished[i])});
    }
    return out;
}

}  // namespace playertrack
