#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace playertrack {

using TrackletId = std::int64_t;
using Identity = int;  // 0 is the catch-all "not tracked" class

struct BoundingBox {
    double left = 0.0;
    double top = 0.0;
    double width = 1.0;
    double height = 1.0;

    double right() const { return left + width; }
    double bottom() const { return top + height; }
    double center_x() const { return left + 0.5 * width; }
    double center_y() const { return top + 0.5 * height; }
    double area() const { return width * height; }

    static BoundingBox from_center(double cx, double cy, double w, double h) {
        return {cx - 0.5 * w, cy - 0.5 * h, w, h};
    }

    /// Throws InvalidArgument when width/height are not strictly positive or
    /// any coordinate is not finite.
    void validate() const;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
    int frame = 0;  // 0-based in memory
    BoundingBox box;
    double confidence = 1.0;
    std::size_t embedding_row = 0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Frame-consecutive sequence of detections of a single (unknown) person.
struct Tracklet {
    TrackletId id = 0;
    std::vector<Detection> detections;

    int first_frame() const { return detections.front().frame; }
    int last_frame() const { return detections.back().frame; }
    std::size_t length() const { return detections.size(); }

    bool overlaps_in_time(const Tracklet& other) const {
        return first_frame() <= other.last_frame() && other.first_frame() <= last_frame();
    }

    friend bool operator==(const Tracklet&, const Tracklet&) = default;
};

/// One ground-truth box (MOT layout with an identity).
struct GroundTruthBox {
    int frame = 0;
    int identity = 0;
    BoundingBox box;

    friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct Annotation {
    TrackletId tracklet_id = 0;
    Identity identity = 0;
    int round = 0;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct TrainingSettings {
    int epochs = 120;
    double learning_rate = 9e-5;
    double weight_decay = 1e-4;
    int batch_size = 4;

    friend bool operator==(const TrainingSettings&, const TrainingSettings&) = default;
};

struct ProjectConfig {
    int n_players = 7;
    double fps = 50.0;

    // tracklet generation
    int l_min = 10;
    double mu = 0.5;
    double iou_min = 0.3;
    double min_confidence = 0.0;

    // tracklet classifier
    int d_t = 10;
    int d1 = 2048;
    int d2 = 128;
    int n_queries = 32;
    int n_selected_queries = 4;
    int encoder_layers = 16;
    int decoder_layers = 1;
    int heads = 16;
    int alpha = 0;
    TrainingSettings training;

    // association
    double eta_app = 0.35;
    double eta_loc = 0.43;
    double tau = 0.5;
    double theta_0 = 0.1;
    int rnmf_iterations = 500;

    std::uint64_t seed = 0;

    int n_classes() const { return 1 + n_players; }

    /// Throws InvalidArgument when a documented invariant is broken.
    void validate() const;

    friend bool operator==(const ProjectConfig&, const ProjectConfig&) = default;
};

}  // namespace playertrack
