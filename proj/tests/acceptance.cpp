// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "playertrack/association/iterative.hpp"
#include "playertrack/association/rnmf.hpp"
#include "playertrack/association/similarity.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/metrics/metrics.hpp"
#include "playertrack/pipeline/pipeline.hpp"
#include "playertrack/reid/gradcheck.hpp"
#include "playertrack/reid/losses.hpp"
#include "playertrack/simulate/simulator.hpp"
#include "playertrack/tracklet/hungarian.hpp"
#include "playertrack/tracklet/tracklet_generator.hpp"

namespace pt = playertrack;
using MatD = pt::nn::Mat<double>;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& what) {
        if (!condition && ok) detail << what;
        ok = ok && condition;
    }
    void near(double actual, double expected, double tol, const std::string& what) {
        std::ostringstream s;
        s << what << ": " << actual << " vs " << expected;
        expect(std::abs(actual - expected) <= tol, s.str());
    }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += c.ok ? 0 : 1;
    std::printf("%s %s (%.1f s)%s%s\n", c.ok ? "PASS" : "FAIL", name.c_str(), secs, c.detail.str().empty() ? "" : ": ",
                c.detail.str().c_str());
    std::fflush(stdout);
}

Eigen::RowVectorXd at_cosine(double c) {
    Eigen::RowVectorXd v(2);
    v << c, std::sqrt(1.0 - c * c);
    return v;
}

pt::Tracklet line(pt::TrackletId id, int first, int length, double x) {
    pt::Tracklet t;
    t.id = id;
    for (int i = 0; i < length; ++i) {
        t.detections.push_back({first + i, {x, 100, 20, 50}, 0.9, static_cast<std::size_t>(first + i)});
    }
    return t;
}

std::vector<pt::GroundTruthBox> track(int identity, int first, int last, double x) {
    std::vector<pt::GroundTruthBox> out;
    for (int f = first; f <= last; ++f) out.push_back({f, identity, {x + f, 100, 40, 100}});
    return out;
}

void formula_exactness(Check& c) {
    const Eigen::RowVectorXd x = (Eigen::RowVectorXd(2) << 1.0, 0.0).finished();
    c.near(pt::psi_app(x, x, 0.35), 1.0, 1e-9, "psi_app identical");
    c.near(pt::psi_app(x, at_cosine(0.65), 0.35), 0.0, 1e-9, "psi_app at eta");
    c.near(pt::psi_app(x, at_cosine(0.825), 0.35), 0.5, 1e-9, "psi_app half");
    c.near(pt::clip_unit(pt::psi_app(x, at_cosine(0.0), 0.35)), 0.0, 1e-12, "clip psi_app");

    const pt::BoundingBox b{10, 10, 20, 40};
    c.near(pt::psi_loc(b, b, 1.0, 1.2, 0.43, 0.5), 1.0, 1e-9, "psi_loc same box");
    c.near(pt::psi_loc(b, {500, 500, 20, 40}, 1.0, 1.2, 0.43, 0.5), -0.43, 1e-9, "psi_loc disjoint");
    c.near(pt::psi_loc(b, b, 1.0, 2.0, 0.43, 0.5), 0.0, 0.0, "psi_loc beyond tau");
    c.near(pt::psi_loc(b, {20, 10, 20, 40}, 0.0, 0.1, 0.43, 0.5), 1.43 / 3.0 - 0.43, 1e-9, "psi_loc IoU 1/3");
    c.near(pt::clip_unit(1.7), 1.0, 0.0, "clip above");
    c.near(pt::clip_unit(-0.2), 0.0, 0.0, "clip below");

    Eigen::MatrixXd f(2, 2);
    f << 1, 0, 1, 0;
    const std::vector<pt::Tracklet> overlap{line(0, 0, 20, 100), line(1, 10, 20, 100)};
    c.near(pt::build_similarity(overlap, f, {}).values(0, 1), 1.0, 1e-9, "S overlapping");
    const std::vector<pt::Tracklet> touching{line(0, 0, 20, 100), line(1, 29, 20, 100)};
    c.near(pt::build_similarity(touching, f, {}).values(0, 1), 2.0, 1e-9, "S successive");
    Eigen::MatrixXd g(2, 2);
    g << 1, 0, 0, 1;
    const std::vector<pt::Tracklet> far{line(0, 0, 20, 100), line(1, 25, 20, 900)};
    c.near(pt::build_similarity(far, g, {}).values(0, 1), 0.0, 1e-9, "S orthogonal and far");

    const auto gt = track(1, 0, 9, 0);
    auto hyp = gt;
    hyp.push_back({3, 2, {1000, 500, 40, 100}});
    c.near(pt::mota(pt::match_frames(gt, hyp)), 0.9, 1e-9, "MOTA one FP in ten");
    const auto long_gt = track(1, 0, 99, 0);
    c.near(pt::idf1(long_gt, track(3, 0, 49, 0)), 2.0 / 3.0, 1e-9, "IDF1 half coverage");

    c.near(pt::nn::id_loss(MatD(MatD::Zero(1, 8)), 3), std::log(8.0), 1e-6, "CE uniform over 8");
    MatD l(1, 2);
    l << 1.0, 0.0;
    c.near(pt::nn::id_loss(l, 0), std::log1p(std::exp(-1.0)), 1e-6, "CE margin 1");
    MatD sq(4, 2);
    sq << 0, 0, 1, 0, 0, 1, 1, 1;
    const std::vector<int> labels{0, 0, 1, 1};
    c.near(pt::nn::triplet_loss_batch_hard(sq, std::span<const int>(labels)), std::log(2.0), 1e-6, "triplet ln 2");
    MatD gap(3, 2);
    gap << 0, 0, 1, 0, 0.5, std::sqrt(121.0 - 0.25);
    const std::vector<int> l3{0, 0, 1};
    c.near(pt::nn::triplet_loss_batch_hard(gap, std::span<const int>(l3)), std::log1p(std::exp(-10.0)), 1e-6,
           "triplet gap -10");
}

double brute_force_min_cost(const Eigen::MatrixXd& cost) {
    const bool transpose = cost.rows() > cost.cols();
    const Eigen::MatrixXd m = transpose ? Eigen::MatrixXd(cost.transpose()) : cost;
    std::vector<int> cols(static_cast<std::size_t>(m.cols()));
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) total += m(r, cols[static_cast<std::size_t>(r)]);
        best = std::min(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

void hungarian_oracle(Check& c) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 7);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> small(0, 4);
    for (int k = 0; k < 1000 && c.ok; ++k) {
        Eigen::MatrixXd cost(dim(rng), dim(rng));
        const bool ties = k % 3 == 0;
        for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = ties ? small(rng) : u(rng);
        const auto a = pt::hungarian_assign(cost);
        const double expected = brute_force_min_cost(cost);
        std::ostringstream s;
        s << "matrix " << k << " (" << cost.rows() << "x" << cost.cols() << ")";
        c.near(a.cost, expected, 1e-9, s.str());
        c.expect(a.pairs.size() == static_cast<std::size_t>(std::min(cost.rows(), cost.cols())), s.str() + " size");
    }
}

void batch_hard_oracle(Check& c) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> size(2, 8);
    std::uniform_int_distribution<int> label(0, 2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 200 && c.ok; ++k) {
        const int b = size(rng);
        MatD f(b, 3);
        for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = k % 4 == 0 ? std::round(2 * n(rng)) : n(rng);
        std::vector<int> labels(static_cast<std::size_t>(b));
        for (auto& l : labels) l = label(rng);
        // All-pairs scan of Euclidean distances computed here, lowest index on ties.
        double total = 0;
        int anchors = 0;
        for (int a = 0; a < b; ++a) {
            double hardest_pos = -1, hardest_neg = std::numeric_limits<double>::infinity();
            for (int j = 0; j < b; ++j) {
                if (j == a) continue;
                const double d = (f.row(a) - f.row(j)).norm();
                if (labels[j] == labels[a]) hardest_pos = std::max(hardest_pos, d);
                else hardest_neg = std::min(hardest_neg, d);
            }
            if (hardest_pos < 0 || std::isinf(hardest_neg)) continue;
            total += std::log1p(std::exp(hardest_pos - hardest_neg));
            ++anchors;
        }
        const double expected = anchors == 0 ? 0.0 : total / anchors;
        c.near(pt::nn::triplet_loss_batch_hard(f, std::span<const int>(labels)), expected, 1e-12,
               "batch " + std::to_string(k));
    }
}

void gradient_check(Check& c) {
    for (int alpha : {0, 1}) {
        const auto r = pt::nn::gradient_check(alpha, 1);
        std::ostringstream s;
        s << "alpha " << alpha << " max relative error " << r.max_relative_error << " (" << r.worst_tensor << ")";
        c.expect(r.max_relative_error < 1e-4, s.str());
        if (c.ok) c.detail << (alpha ? ", " : "") << "alpha " << alpha << " " << r.max_relative_error;
    }
}

void rnmf(Check& c) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(2, 40);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int k = 0; k < 100 && c.ok; ++k) {
        const int n = dim(rng);
        pt::SimilarityMatrix s;
        s.values.resize(n, n);
        for (int i = 0; i < n; ++i) {
            s.values(i, i) = pt::kSelfSimilarity;
            for (int j = i + 1; j < n; ++j) s.values(i, j) = s.values(j, i) = u(rng);
            s.ids.push_back(static_cast<pt::TrackletId>(i));
        }
        std::vector<pt::Annotation> ann;
        if (k % 2 == 1) ann.push_back({0, 1, 1});
        pt::RnmfOptions o;
        o.tolerance = 0.0;
        o.iterations = 300;
        o.seed = static_cast<std::uint64_t>(k);
        const auto r = pt::rnmf_factorize(s, 3, ann, o);
        for (std::size_t t = 1; t < r.objective.size(); ++t) {
            if (r.objective[t] > r.objective[t - 1] + 1e-10) {
                std::ostringstream m;
                m << "matrix " << k << " step " << t << ": " << r.objective[t - 1] << " -> " << r.objective[t];
                c.expect(false, m.str());
                break;
            }
        }
        c.expect((r.a.array() >= 0.0).all(), "negative factor entry");
    }
    // Two identities with within-block similarity 2 and zero across.
    for (int k = 0; k < 50 && c.ok; ++k) {
        const int n = 4 + k % 8;
        std::vector<int> block(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) block[static_cast<std::size_t>(i)] = i % 2;
        std::shuffle(block.begin(), block.end(), rng);
        pt::SimilarityMatrix s;
        s.values.resize(n, n);
        std::vector<pt::Tracklet> ts;
        for (int i = 0; i < n; ++i) {
            s.ids.push_back(static_cast<pt::TrackletId>(i));
            ts.push_back(line(static_cast<pt::TrackletId>(i), 100 * i, 10, 0));
            for (int j = 0; j < n; ++j) s.values(i, j) = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? 2.0 : 0.0;
        }
        const int first0 = static_cast<int>(std::find(block.begin(), block.end(), 0) - block.begin());
        const int first1 = static_cast<int>(std::find(block.begin(), block.end(), 1) - block.begin());
        const std::vector<pt::Annotation> ann{{static_cast<pt::TrackletId>(first0), 1, 1},
                                              {static_cast<pt::TrackletId>(first1), 2, 1}};
        pt::RnmfOptions o;
        o.seed = static_cast<std::uint64_t>(k);
        const auto r = pt::rnmf_factorize(s, 2, ann, o);
        const auto a = pt::associate_rnmf(r.a, ts, ann, 0.1);
        for (int i = 0; i < n; ++i) {
            c.expect(a.entries[static_cast<std::size_t>(i)].identity == block[static_cast<std::size_t>(i)] + 1,
                     "block case " + std::to_string(k) + " row " + std::to_string(i));
        }
    }
}

void tracklet_invariants(Check& c) {
    const pt::TrackletGenParams params;
    auto verify = [&](const std::vector<pt::Tracklet>& ts, const std::string& where) {
        std::set<std::size_t> rows;
        std::map<int, std::vector<std::pair<const pt::Tracklet*, const pt::Detection*>>> by_frame;
        for (const auto& t : ts) {
            c.expect(static_cast<int>(t.length()) >= params.l_min, where + ": short tracklet");
            for (std::size_t i = 0; i < t.length(); ++i) {
                if (i > 0) c.expect(t.detections[i].frame == t.detections[i - 1].frame + 1, where + ": frame gap");
                c.expect(rows.insert(t.detections[i].embedding_row).second, where + ": shared detection");
                by_frame[t.detections[i].frame].push_back({&t, &t.detections[i]});
            }
        }
        for (const auto& [frame, list] : by_frame) {
            for (std::size_t a = 0; a < list.size(); ++a) {
                for (std::size_t b = a + 1; b < list.size(); ++b) {
                    if (list[a].first->first_frame() == frame || list[b].first->first_frame() == frame) continue;
                    c.expect(pt::iou(list[a].second->box, list[b].second->box) < params.mu,
                             where + ": overlapping tracks at frame " + std::to_string(frame));
                }
            }
        }
    };
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        pt::sim::SimConfig sc;
        sc.embedding_dim = 4;
        sc.seed = seed;
        const auto game = pt::sim::simulate(sc);
        const auto ts = pt::generate_tracklets(game.detections, params);
        total += ts.size();
        verify(ts, "seed " + std::to_string(seed));

        sc.occlusion_rate = 0.0;
        const auto clean = pt::sim::simulate(sc);
        const auto cts = pt::generate_tracklets(clean.detections, params);
        verify(cts, "occlusion-free seed " + std::to_string(seed));
        for (const auto& t : cts) {
            const int id = clean.detection_identity[t.detections.front().embedding_row];
            for (const auto& d : t.detections) {
                c.expect(clean.detection_identity[d.embedding_row] == id,
                         "impure tracklet on occlusion-free seed " + std::to_string(seed));
            }
        }
    }
    if (c.ok) c.detail << total << " tracklets over 20 seeds";
}

void iterative_invariant(Check& c) {
    auto verify = [&](const pt::Association& a, const std::vector<pt::Tracklet>& ts, const std::string& where) {
        std::map<pt::Identity, std::vector<const pt::Tracklet*>> groups;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (a.entries[i].identity != 0) groups[a.entries[i].identity].push_back(&ts[i]);
        }
        for (const auto& [id, list] : groups) {
            for (std::size_t x = 0; x < list.size(); ++x) {
                for (std::size_t y = x + 1; y < list.size(); ++y) {
                    const bool disjoint = list[x]->last_frame() < list[y]->first_frame() ||
                                          list[y]->last_frame() < list[x]->first_frame();
                    c.expect(disjoint, where + ": identity " + std::to_string(id) + " overlaps in time");
                }
            }
        }
    };
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> count(1, 30), start(0, 200), length(1, 60), players(1, 7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int cases = 0;
    for (int k = 0; k < 500; ++k, ++cases) {
        const int n = count(rng), np = players(rng);
        std::vector<pt::Tracklet> ts;
        for (int i = 0; i < n; ++i) ts.push_back(line(static_cast<pt::TrackletId>(i), start(rng), length(rng), 0));
        Eigen::MatrixXd p(n, np + 1);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
        verify(pt::associate_iterative(pt::softmax_scores(p), ts, {}), ts, "random case " + std::to_string(k));
    }
    // Model-free cases on simulated tracklets: probabilities from true identities plus noise.
    for (std::uint64_t seed = 0; seed < 5; ++seed, ++cases) {
        pt::sim::SimConfig sc;
        sc.embedding_dim = 4;
        sc.seed = seed;
        const auto game = pt::sim::simulate(sc);
        const auto ts = pt::generate_tracklets(game.detections, {});
        Eigen::MatrixXd p(static_cast<Eigen::Index>(ts.size()), 8);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const int id = game.detection_identity[ts[i].detections.front().embedding_row];
            for (int j = 0; j < 8; ++j) p(static_cast<Eigen::Index>(i), j) = u(rng) + (j == (id <= 7 ? id : 0) ? 1.0 : 0.0);
        }
        verify(pt::associate_iterative(pt::softmax_scores(p), ts, {}), ts, "simulated seed " + std::to_string(seed));
    }
    if (c.ok) c.detail << cases << " cases";
}

struct Mean {
    double idf1 = 0, mota = 0, idsw = 0;
};

Mean mean_of(const std::vector<pt::MetricsReport>& rs) {
    Mean m;
    for (const auto& r : rs) {
        m.idf1 += r.idf1 / static_cast<double>(rs.size());
        m.mota += r.mota / static_cast<double>(rs.size());
        m.idsw += static_cast<double>(r.idsw) / static_cast<double>(rs.size());
    }
    return m;
}

std::vector<pt::ProtocolResult> protocol_runs(int seeds) {
    std::vector<pt::ProtocolResult> out;
    for (int k = 0; k < seeds; ++k) {
        pt::sim::SimConfig sc;
        sc.seed = static_cast<std::uint64_t>(k);
        auto pc = pt::sim::project_config_for(sc);
        pc.seed = sc.seed;
        pt::ProtocolOptions options;
        options.rounds = 4;
        options.train_seed = sc.seed;
        out.push_back(pt::run_protocol(sc, pc, options));
        const auto& r = out.back();
        std::printf("  seed %d: %d tracklets, IDF1 by round", k, r.tracklets);
        for (const auto& round : r.rounds) std::printf(" %.3f", round.iterative.idf1);
        std::printf("; final MOTA %.3f IDs %lld; rnmf IDF1 %.3f MOTA %.3f IDs %lld (%.0f s)\n",
                    r.rounds.back().iterative.mota, r.rounds.back().iterative.idsw, r.rnmf->idf1, r.rnmf->mota,
                    r.rnmf->idsw, r.seconds);
        std::fflush(stdout);
    }
    return out;
}

void metrics_sanity(Check& c) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        pt::sim::SimConfig sc;
        sc.embedding_dim = 4;
        sc.seed = seed;
        const auto gt = pt::sim::simulate(sc).ground_truth;
        const auto r = pt::evaluate(gt, gt);
        c.expect(r.idf1 == 1.0, "IDF1 " + std::to_string(r.idf1));
        c.expect(r.mota == 1.0, "MOTA " + std::to_string(r.mota));
        c.expect(r.idsw == 0, "IDSW " + std::to_string(r.idsw));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    int seeds = 5;
    app.add_option("--seeds", seeds, "Seeds of the end-to-end protocol")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    criterion("formula exactness", formula_exactness);
    criterion("hungarian matches exhaustive search on 1000 matrices", hungarian_oracle);
    criterion("batch-hard mining matches all-pairs scan on 200 batches", batch_hard_oracle);
    criterion("gradient check below 1e-4 for alpha 0 and 1", gradient_check);
    criterion("rnmf objective non-increasing and block recovery exact", rnmf);
    criterion("tracklet invariants on 20 simulated seeds", tracklet_invariants);
    criterion("iterative association keeps identities disjoint in time", iterative_invariant);
    criterion("metrics sanity on hyp = gt", metrics_sanity);

    std::vector<pt::ProtocolResult> runs;
    criterion("end-to-end protocol runs", [&](Check& c) {
        runs = protocol_runs(seeds);
        c.detail << runs.size() << " seeds";
    });
    if (runs.empty()) return 1;
    std::vector<pt::MetricsReport> final_iter, round1, round3, final_rnmf;
    for (const auto& r : runs) {
        final_iter.push_back(r.rounds.back().iterative);
        round1.push_back(r.rounds[0].iterative);
        round3.push_back(r.rounds[2].iterative);
        final_rnmf.push_back(*r.rnmf);
    }
    const auto it = mean_of(final_iter), r1 = mean_of(round1), r3 = mean_of(round3), nmf = mean_of(final_rnmf);
    auto fmt = [](const char* f, double a, double b) {
        char buf[128];
        std::snprintf(buf, sizeof buf, f, a, b);
        return std::string(buf);
    };
    criterion("end-to-end mean IDF1 >= 0.85 with 4 annotations per player", [&](Check& c) {
        c.expect(it.idf1 >= 0.85, fmt("mean IDF1 %.4f < %.2f", it.idf1, 0.85));
        if (c.ok) c.detail << fmt("mean IDF1 %.4f (threshold %.2f)", it.idf1, 0.85);
    });
    criterion("end-to-end mean IDF1 at round 3 >= round 1", [&](Check& c) {
        c.expect(r3.idf1 >= r1.idf1, fmt("round 3 %.4f < round 1 %.4f", r3.idf1, r1.idf1));
        if (c.ok) c.detail << fmt("round 1 %.4f, round 3 %.4f", r1.idf1, r3.idf1);
    });
    criterion("end-to-end rnmf mean MOTA >= iterative mean MOTA", [&](Check& c) {
        c.expect(nmf.mota >= it.mota, fmt("rnmf %.4f < iterative %.4f", nmf.mota, it.mota));
        if (c.ok) c.detail << fmt("rnmf %.4f, iterative %.4f", nmf.mota, it.mota);
    });
    criterion("end-to-end rnmf mean IDs >= iterative mean IDs", [&](Check& c) {
        c.expect(nmf.idsw >= it.idsw, fmt("rnmf %.1f < iterative %.1f", nmf.idsw, it.idsw));
        if (c.ok) c.detail << fmt("rnmf %.1f, iterative %.1f", nmf.idsw, it.idsw);
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
