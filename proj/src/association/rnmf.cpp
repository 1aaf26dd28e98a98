#include "playertrack/association/rnmf.hpp"

#include <random>
#include <unordered_map>

#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"

namespace playertrack {

double rnmf_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    return (s - a * a.transpose()).squaredNorm();
}

RnmfResult rnmf_factorize(const SimilarityMatrix& s, int n_players, std::span<const Annotation> annotations,
                          const RnmfOptions& options) {
    const Eigen::Index n = s.values.rows();
    if (s.values.cols() != n || static_cast<Eigen::Index>(s.ids.size()) != n)
        throw InvalidArgument("rnmf_factorize: malformed similarity matrix");
    if (n_players < 1) throw InvalidArgument("rnmf_factorize: n_players must be >= 1");

    std::unordered_map<TrackletId, Eigen::Index> index;
    for (Eigen::Index t = 0; t < n; ++t) index.emplace(s.ids[static_cast<std::size_t>(t)], t);

    std::vector<std::pair<Eigen::Index, Identity>> clamped;
    for (const auto& ann : io::latest_annotations(annotations)) {
        auto it = index.find(ann.tracklet_id);
        if (it == index.end()) continue;
        if (ann.identity < 0 || ann.identity > n_players)
            throw InvalidArgument("rnmf_factorize: annotation identity out of range");
        clamped.emplace_back(it->second, ann.identity);
    }

    if (options.restarts < 1) throw InvalidArgument("rnmf_factorize: restarts must be >= 1");

    auto clamp = [&](Eigen::MatrixXd& a) {
        for (auto [row, identity] : clamped) {
            a.row(row).setZero();
            if (identity > 0) a(row, identity - 1) = 1.0;
        }
    };
    const Eigen::MatrixXd& sm = s.values;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    RnmfResult best;
    for (int start = 0; start < options.restarts; ++start) {
        RnmfResult r;
        r.restart = start;
        r.a.resize(n, n_players);
        for (Eigen::Index i = 0; i < r.a.size(); ++i) {
            double v = 0.0;
            while (v == 0.0) v = unit(rng);
            r.a.data()[i] = v;
        }
        clamp(r.a);

        r.objective.push_back(rnmf_objective(sm, r.a));
        for (int it = 0; it < options.iterations; ++it) {
            const Eigen::MatrixXd numerator = sm * r.a;
            const Eigen::MatrixXd denominator = r.a * (r.a.transpose() * r.a);
            r.a.array() *= (numerator.array() / (denominator.array() + options.epsilon)).pow(options.exponent);
            clamp(r.a);
            const double obj = rnmf_objective(sm, r.a);
            const double improvement = r.objective.back() - obj;
            r.objective.push_back(obj);
            if (improvement < options.tolerance) break;
        }
        if (start == 0 || r.objective.back() < best.objective.back()) best = std::move(r);
    }
    return best;
}

Association associate_rnmf(const Eigen::MatrixXd& a, std::span<const Tracklet> tracklets,
                           std::span<const Annotation> annotations, double theta_0) {
    if (static_cast<std::size_t>(a.rows()) != tracklets.size())
        throw InvalidArgument("associate_rnmf: need one row of A per tracklet");

    std::unordered_map<TrackletId, Identity> labels;
    for (const auto& ann : io::latest_annotations(annotations)) labels[ann.tracklet_id] = ann.identity;

    Association out;
    out.method = "rnmf";
    for (std::size_t t = 0; t < tracklets.size(); ++t) {
        const TrackletId id = tracklets[t].id;
        if (auto it = labels.find(id); it != labels.end()) {
            out.entries.push_back({id, it->second, Provenance::annotated, 1.0});
            continue;
        }
        Eigen::Index col = 0;
        const double best = a.cols() > 0 ? a.row(static_cast<Eigen::Index>(t)).maxCoeff(&col) : 0.0;
        if (best < theta_0) {
            out.entries.push_back({id, 0, Provenance::rnmf, best});
        } else {
            out.entries.push_back({id, static_cast<Identity>(col + 1), Provenance::rnmf, best});
        }
    }
    return out;
}

}  // namespace playertrack
