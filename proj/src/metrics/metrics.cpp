#include "playertrack/metrics/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/tracklet/hungarian.hpp"

namespace playertrack {
namespace {

using FrameIndex = std::map<int, std::pair<std::vector<const GroundTruthBox*>, std::vector<const GroundTruthBox*>>>;

FrameIndex index_frames(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp) {
    FrameIndex frames;
    for (const auto& g : gt) frames[g.frame].first.push_back(&g);
    for (const auto& h : hyp) frames[h.frame].second.push_back(&h);
    return frames;
}

}  // namespace

long long FrameMatching::false_positives() const {
    long long n = 0;
    for (const auto& f : frames) n += f.false_positives;
    return n;
}

long long FrameMatching::false_negatives() const {
    long long n = 0;
    for (const auto& f : frames) n += f.false_negatives;
    return n;
}

long long FrameMatching::matches() const {
    long long n = 0;
    for (const auto& f : frames) n += static_cast<long long>(f.pairs.size());
    return n;
}

FrameMatching match_frames(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp) {
    FrameMatching out;
    out.gt_boxes = static_cast<long long>(gt.size());
    out.hyp_boxes = static_cast<long long>(hyp.size());
    std::unordered_map<int, int> last;  // gt identity -> hyp identity

    for (const auto& [frame, boxes] : index_frames(gt, hyp)) {
        const auto& [gs, hs] = boxes;
        FrameMatch fm;
        fm.frame = frame;
        std::vector<bool> g_used(gs.size(), false), h_used(hs.size(), false);

        auto record = [&](std::size_t gi, std::size_t hi) {
            g_used[gi] = h_used[hi] = true;
            const int gid = gs[gi]->identity;
            const int hid = hs[hi]->identity;
            fm.pairs.emplace_back(gid, hid);
            auto it = last.find(gid);
            if (it != last.end() && it->second != hid) ++fm.id_switches;
            last[gid] = hid;
        };

        for (std::size_t gi = 0; gi < gs.size(); ++gi) {
            auto it = last.find(gs[gi]->identity);
            if (it == last.end()) continue;
            std::size_t best = hs.size();
            double best_iou = kMatchIou;
            for (std::size_t hi = 0; hi < hs.size(); ++hi) {
                if (h_used[hi] || hs[hi]->identity != it->second) continue;
                const double v = iou(gs[gi]->box, hs[hi]->box);
                if (v >= best_iou && (best == hs.size() || v > best_iou)) {
                    best = hi;
                    best_iou = v;
                }
            }
            if (best != hs.size()) record(gi, best);
        }

        std::vector<std::size_t> g_free, h_free;
        for (std::size_t i = 0; i < gs.size(); ++i)
            if (!g_used[i]) g_free.push_back(i);
        for (std::size_t i = 0; i < hs.size(); ++i)
            if (!h_used[i]) h_free.push_back(i);
        if (!g_free.empty() && !h_free.empty()) {
            Eigen::MatrixXd cost(static_cast<Eigen::Index>(g_free.size()), static_cast<Eigen::Index>(h_free.size()));
            for (std::size_t r = 0; r < g_free.size(); ++r) {
                for (std::size_t c = 0; c < h_free.size(); ++c) {
                    const double v = iou(gs[g_free[r]]->box, hs[h_free[c]]->box);
                    cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        v >= kMatchIou ? 1.0 - v : kForbiddenCost;
                }
            }
            for (auto [r, c] : hungarian_assign(cost).pairs)
                record(g_free[static_cast<std::size_t>(r)], h_free[static_cast<std::size_t>(c)]);
        }

        fm.false_negatives = static_cast<int>(std::count(g_used.begin(), g_used.end(), false));
        fm.false_positives = static_cast<int>(std::count(h_used.begin(), h_used.end(), false));
        out.frames.push_back(std::move(fm));
    }
    return out;
}

long long idsw(const FrameMatching& m) {
    long long n = 0;
    for (const auto& f : m.frames) n += f.id_switches;
    return n;
}

double mota(const FrameMatching& m) {
    if (m.gt_boxes == 0) throw InvalidArgument("MOTA is undefined without ground-truth boxes");
    const auto errors = m.false_negatives() + m.false_positives() + idsw(m);
    return 1.0 - static_cast<double>(errors) / static_cast<double>(m.gt_boxes);
}

double IdentityCounts::idf1() const {
    const long long denom = 2 * idtp + idfp + idfn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(idtp) / static_cast<double>(denom);
}

IdentityCounts identity_counts(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp) {
    std::map<int, Eigen::Index> g_ids, h_ids;
    for (const auto& g : gt) g_ids.emplace(g.identity, 0);
    for (const auto& h : hyp) h_ids.emplace(h.identity, 0);
    Eigen::Index k = 0;
    for (auto& [id, i] : g_ids) i = k++;
    k = 0;
    for (auto& [id, i] : h_ids) i = k++;

    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g_ids.size()),
                                                    static_cast<Eigen::Index>(h_ids.size()));
    for (const auto& [frame, boxes] : index_frames(gt, hyp)) {
        std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
        for (const auto* g : boxes.first) {
            for (const auto* h : boxes.second) {
                if (iou(g->box, h->box) < kMatchIou) continue;
                const auto key = std::make_pair(g_ids[g->identity], h_ids[h->identity]);
                if (seen.insert(key).second) overlap(key.first, key.second) += 1.0;
            }
        }
    }

    IdentityCounts c;
    if (overlap.size() > 0) {
        for (auto [r, col] : hungarian_assign(-overlap).pairs)
            c.idtp += static_cast<long long>(overlap(r, col));
    }
    c.idfn = static_cast<long long>(gt.size()) - c.idtp;
    c.idfp = static_cast<long long>(hyp.size()) - c.idtp;
    return c;
}

double idf1(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp) {
    return identity_counts(gt, hyp).idf1();
}

MetricsReport evaluate(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp) {
    const FrameMatching m = match_frames(gt, hyp);
    const IdentityCounts ids = identity_counts(gt, hyp);
    MetricsReport r;
    r.idf1 = ids.idf1();
    r.idtp = ids.idtp;
    r.idfp = ids.idfp;
    r.idfn = ids.idfn;
    r.idsw = idsw(m);
    r.fp = m.false_positives();
    r.fn = m.false_negatives();
    r.gt = m.gt_boxes;
    r.mota = mota(m);
    return r;
}

MetricsReport evaluate_team(std::span<const GroundTruthBox> gt, std::span<const GroundTruthBox> hyp, int n_players) {
    auto in_team = [n_players](const GroundTruthBox& b) { return b.identity >= 1 && b.identity <= n_players; };
    std::vector<GroundTruthBox> g, h;
    std::copy_if(gt.begin(), gt.end(), std::back_inserter(g), in_team);
    std::copy_if(hyp.begin(), hyp.end(), std::back_inserter(h), in_team);
    return evaluate(g, h);
}

nlohmann::json to_json(const MetricsReport& r) {
    return {{"idf1", r.idf1}, {"mota", r.mota}, {"idsw", r.idsw}, {"idtp", r.idtp}, {"idfp", r.idfp},
            {"idfn", r.idfn}, {"fp", r.fp},     {"fn", r.fn},     {"gt", r.gt}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.idf1 = j.at("idf1").get<double>();
    r.mota = j.at("mota").get<double>();
    r.idsw = j.at("idsw").get<long long>();
    r.idtp = j.at("idtp").get<long long>();
    r.idfp = j.at("idfp").get<long long>();
    r.idfn = j.at("idfn").get<long long>();
    r.fp = j.at("fp").get<long long>();
    r.fn = j.at("fn").get<long long>();
    r.gt = j.at("gt").get<long long>();
    return r;
}

std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
    std::size_t width = 6;
    for (const auto& [label, r] : rows) width = std::max(width, label.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right << std::setw(8) << "IDF1"
        << std::setw(7) << "IDs" << std::setw(8) << "MOTA" << '\n';
    out << std::fixed << std::setprecision(1);
    for (const auto& [label, r] : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::setw(8)
            << 100.0 * r.idf1 << std::setw(7) << r.idsw << std::setw(8) << 100.0 * r.mota << '\n';
    }
    return out.str();
}

}  // namespace playertrack
