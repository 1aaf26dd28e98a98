#include "playertrack/association/iterative.hpp"

#include <algorithm>
#include <unordered_map>

#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"

namespace playertrack {

Eigen::MatrixXd softmax_scores(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd p(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double m = scores.row(r).maxCoeff();
        p.row(r) = (scores.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

Association associate_iterative(const Eigen::MatrixXd& probabilities, std::span<const Tracklet> tracklets,
                                std::span<const Annotation> annotations) {
    const auto n = tracklets.size();
    if (static_cast<std::size_t>(probabilities.rows()) != n)
        throw InvalidArgument("associate_iterative: need one score row per tracklet");
    const auto n_classes = static_cast<int>(probabilities.cols());

    std::unordered_map<TrackletId, std::size_t> index;
    for (std::size_t t = 0; t < n; ++t) index.emplace(tracklets[t].id, t);

    Association out;
    out.method = "iterative";
    out.entries.resize(n);
    std::vector<bool> assigned(n, false);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));

    auto accept = [&](std::size_t t, Identity i, Provenance p, double score) {
        out.entries[t] = {tracklets[t].id, i, p, score};
        assigned[t] = true;
        if (i > 0) members[static_cast<std::size_t>(i)].push_back(t);
    };

    for (const auto& a : io::latest_annotations(annotations)) {
        auto it = index.find(a.tracklet_id);
        if (it == index.end()) continue;
        if (a.identity < 0 || a.identity >= n_classes)
            throw InvalidArgument("associate_iterative: annotation identity out of range");
        accept(it->second, a.identity, Provenance::annotated, 1.0);
    }

    struct Pair {
        double score;
        std::size_t t;
        int i;
    };
    std::vector<Pair> pairs;
    pairs.reserve(n * static_cast<std::size_t>(n_classes));
    for (std::size_t t = 0; t < n; ++t) {
        if (assigned[t]) continue;
        for (int i = 0; i < n_classes; ++i)
            pairs.push_back({probabilities(static_cast<Eigen::Index>(t), i), t, i});
    }
    // Assignments only remove candidates, so walking the pairs in descending
    // order visits the same sequence of global maxima as rescanning.
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.score > b.score; });

    for (const auto& p : pairs) {
        if (assigned[p.t]) continue;
        if (p.i == 0) {
            accept(p.t, 0, Provenance::iterative, p.score);
            continue;
        }
        const auto& taken = members[static_cast<std::size_t>(p.i)];
        const bool clash = std::any_of(taken.begin(), taken.end(),
                                       [&](std::size_t u) { return tracklets[u].overlaps_in_time(tracklets[p.t]); });
        if (!clash) accept(p.t, p.i, Provenance::iterative, p.score);
    }

    for (std::size_t t = 0; t < n; ++t) {
        if (!assigned[t]) out.entries[t] = {tracklets[t].id, 0, Provenance::unassigned, 0.0};
    }
    return out;
}

}  // namespace playertrack
