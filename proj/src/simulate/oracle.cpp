#include "playertrack/simulate/oracle.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"

namespace playertrack::sim {

std::vector<TrackletTruth> tracklet_truth(std::span<const Tracklet> tracklets,
                                          std::span<const GroundTruthBox> ground_truth) {
    std::map<int, std::vector<const GroundTruthBox*>> by_frame;
    for (const auto& g : ground_truth) by_frame[g.frame].push_back(&g);

    std::vector<TrackletTruth> out;
    out.reserve(tracklets.size());
    for (const auto& t : tracklets) {
        std::map<int, int> votes;
        for (const auto& d : t.detections) {
            int identity = 0;
            double best = 0.5;
            if (auto it = by_frame.find(d.frame); it != by_frame.end()) {
                for (const auto* g : it->second) {
                    const double v = iou(d.box, g->box);
                    if (v >= best) {
                        best = v;
                        identity = g->identity;
                    }
                }
            }
            ++votes[identity];
        }
        TrackletTruth truth{t.id, 0, 0.0};
        int top = -1;
        for (auto [identity, count] : votes) {
            if (count > top) {
                top = count;
                truth.identity = identity;
            }
        }
        truth.purity = t.detections.empty() ? 0.0 : static_cast<double>(top) / t.length();
        out.push_back(truth);
    }
    return out;
}

std::vector<Annotation> oracle_round(std::span<const Tracklet> tracklets, std::span<const TrackletTruth> truth,
                                     int n_players, std::span<const Annotation> existing,
                                     const Association* current, int round, OracleBudget budget) {
    if (truth.size() != tracklets.size()) throw InvalidArgument("oracle_round: need one truth entry per tracklet");
    std::set<TrackletId> annotated;
    for (const auto& a : existing) annotated.insert(a.tracklet_id);

    std::vector<Annotation> out;
    auto pick = [&](Identity label, int count) {
        // (is correct, -length, id, index); smallest first.
        std::vector<std::tuple<bool, int, TrackletId, std::size_t>> candidates;
        for (std::size_t i = 0; i < tracklets.size(); ++i) {
            if (annotated.count(tracklets[i].id) || oracle_label(truth[i], n_players) != label) continue;
            bool correct = false;
            if (current) {
                const auto* e = current->find(tracklets[i].id);
                correct = e && e->identity == label;
            }
            candidates.emplace_back(correct, -tracklets[i].length(), tracklets[i].id, i);
        }
        std::sort(candidates.begin(), candidates.end());
        for (int k = 0; k < count && k < static_cast<int>(candidates.size()); ++k) {
            const TrackletId id = std::get<2>(candidates[static_cast<std::size_t>(k)]);
            out.push_back({id, label, round});
            annotated.insert(id);
        }
    };
    for (Identity p = 1; p <= n_players; ++p) pick(p, budget.per_player);
    pick(0, budget.class_zero);
    return out;
}

}  // namespace playertrack::sim
