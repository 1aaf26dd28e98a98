#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack {

inline constexpr double kMatchIou = 0.5;

struct FrameMatch {
    int frame = 0;
    std::vector<std::pair<int, int>> pairs;  // (gt identity, hyp identity)
    int false_positives = 0;
    int false_negatives = 0;
    int id_switches = 0;
};

struct FrameMatching {
    std::vector<FrameMatch> frames;  // ascending frame order
    long long gt_boxes = 0;
    long long hyp_boxes = 0;

    long long false_positives() const;
    long long false_negatives() const;
    long long matches() const;
};

struct MetricsReport {
    double idf1 = 0.0;
    double mota = 0.0;
    long long idsw = 0;
    long long idtp = 0;
    long long idfp = 0;
    long long idfn = 0;
    long long fp = 0;
    long long fn = 0;
    long long gt = 0;
};

/// CLEAR correspondence. Per frame, a ground-truth identity keeps its last
/// matched hypothesis identity while that hypothesis box still overlaps at
/// IoU >= 0.5; remaining boxes are paired by Hungarian on 1 - IoU with the
/// same gate. An ID switch is counted when a ground-truth identity is matched
/// to a different hypothesis identity than at its previous match.
FrameMatching match_frames(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp);

/// 1 - (FN + FP + IDSW) / GT. Throws InvalidArgument when GT is empty.
double mota(const FrameMatching& m);
long long idsw(const FrameMatching& m);

struct IdentityCounts {
    long long idtp = 0;
    long long idfp = 0;
    long long idfn = 0;
    double idf1() const;
};

/// Global identity pairing maximizing the number of co-occurring frames
/// (IoU >= 0.5) over the whole sequence.
IdentityCounts identity_counts(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp);
double idf1(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp);

MetricsReport evaluate(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp);

/// Keeps ground-truth identities 1..n_players and hypothesis identities
/// 1..n_players, then evaluates.
MetricsReport evaluate_team(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp, int n_players);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

/// Aligned table with one row per entry: label, IDF1 and MOTA in percent, IDs.
std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows);

}  // namespace playertrack
