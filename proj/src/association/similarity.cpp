#include "playertrack/association/similarity.hpp"

#include <cmath>
#include <fstream>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"

namespace playertrack {

double psi_app(const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v,
               double eta_app) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw InvalidArgument("psi_app: zero-norm feature vector");
    const double cosine_distance = 1.0 - u.dot(v) / (nu * nv);
    return 1.0 - cosine_distance / eta_app;
}

double psi_loc(const BoundingBox& last_box, const BoundingBox& first_box, double end_time, double start_time,
               double eta_loc, double tau) {
    if (start_time - end_time > tau) return 0.0;
    return (1.0 + eta_loc) * iou(last_box, first_box) - eta_loc;
}

SimilarityMatrix build_similarity(std::span<const Tracklet> tracklets, const Eigen::MatrixXd& features,
                                  const ProjectConfig& config) {
    const auto n = static_cast<Eigen::Index>(tracklets.size());
    if (features.rows() != n) throw InvalidArgument("build_similarity: need one feature row per tracklet");

    SimilarityMatrix s;
    s.values = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : tracklets) s.ids.push_back(t.id);

    Eigen::MatrixXd unit = features;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = unit.row(i).norm();
        if (norm == 0.0) throw InvalidArgument("build_similarity: zero-norm feature vector");
        unit.row(i) /= norm;
    }
    const Eigen::MatrixXd cosine = unit * unit.transpose();

    for (Eigen::Index u = 0; u < n; ++u) {
        s.values(u, u) = kSelfSimilarity;
        const Tracklet& tu = tracklets[static_cast<std::size_t>(u)];
        for (Eigen::Index v = u + 1; v < n; ++v) {
            const Tracklet& tv = tracklets[static_cast<std::size_t>(v)];
            const double app = 1.0 - (1.0 - cosine(u, v)) / config.eta_app;
            double loc = 0.0;
            if (!tu.overlaps_in_time(tv)) {
                const Tracklet& first = tu.last_frame() < tv.first_frame() ? tu : tv;
                const Tracklet& second = &first == &tu ? tv : tu;
                loc = psi_loc(first.detections.back().box, second.detections.front().box,
                              first.last_frame() / config.fps, second.first_frame() / config.fps, config.eta_loc,
                              config.tau);
            }
            s.values(u, v) = s.values(v, u) = clip_unit(app) + clip_unit(loc);
        }
    }
    return s;
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& s) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "tracklet";
    for (auto id : s.ids) out << ',' << id;
    out << '\n';
    out.precision(17);
    for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
        out << s.ids[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < s.values.cols(); ++c) out << ',' << s.values(r, c);
        out << '\n';
    }
}

}  // namespace playertrack
