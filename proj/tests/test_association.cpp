#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "playertrack/association/iterative.hpp"
#include "playertrack/association/rnmf.hpp"
#include "playertrack/association/similarity.hpp"
#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "support.hpp"

namespace playertrack {
namespace {

Eigen::RowVectorXd at_cosine(double c) {
    Eigen::RowVectorXd v(2);
    v << c, std::sqrt(1.0 - c * c);
    return v;
}

const Eigen::RowVectorXd kUnitX = (Eigen::RowVectorXd(2) << 1.0, 0.0).finished();

TEST(PsiApp, Examples) {
    EXPECT_NEAR(psi_app(kUnitX, kUnitX, 0.35), 1.0, 1e-12);
    EXPECT_NEAR(psi_app(kUnitX, at_cosine(1.0 - 0.35), 0.35), 0.0, 1e-9);
    EXPECT_NEAR(psi_app(kUnitX, at_cosine(1.0 - 0.175), 0.35), 0.5, 1e-9);
    EXPECT_NEAR(clip_unit(psi_app(kUnitX, at_cosine(0.0), 0.35)), 0.0, 1e-12);
    EXPECT_THROW(psi_app(kUnitX, Eigen::RowVectorXd::Zero(2), 0.35), InvalidArgument);
}

TEST(PsiApp, ScaleInvariant) {
    const Eigen::RowVectorXd v = at_cosine(0.8);
    EXPECT_NEAR(psi_app(3.0 * kUnitX, 0.5 * v, 0.35), psi_app(kUnitX, v, 0.35), 1e-12);
}

TEST(PsiLoc, Examples) {
    const BoundingBox b{10, 10, 20, 40};
    EXPECT_NEAR(psi_loc(b, b, 1.0, 1.2, 0.43, 0.5), 1.0, 1e-9);
    EXPECT_NEAR(psi_loc(b, {500, 500, 20, 40}, 1.0, 1.2, 0.43, 0.5), -0.43, 1e-9);
    EXPECT_EQ(clip_unit(psi_loc(b, {500, 500, 20, 40}, 1.0, 1.2, 0.43, 0.5)), 0.0);
    EXPECT_EQ(psi_loc(b, b, 1.0, 2.0, 0.43, 0.5), 0.0);
    const BoundingBox half{20, 10, 20, 40};  // IoU 1/3
    EXPECT_NEAR(psi_loc(b, half, 0.0, 0.1, 0.43, 0.5), 1.43 / 3.0 - 0.43, 1e-9);
}

Tracklet line(TrackletId id, int first, int length, double x, std::size_t row0 = 0) {
    Tracklet t;
    t.id = id;
    for (int i = 0; i < length; ++i) {
        t.detections.push_back({first + i, {x, 100, 20, 50}, 0.9, row0 + static_cast<std::size_t>(i)});
    }
    return t;
}

TEST(Similarity, OverlappingTrackletsUseAppearanceOnly) {
    const std::vector<Tracklet> ts{line(0, 0, 20, 100), line(1, 10, 20, 100)};
    Eigen::MatrixXd f(2, 2);
    f << 1, 0, 1, 0;
    const auto s = build_similarity(ts, f, ProjectConfig{});
    EXPECT_NEAR(s.values(0, 1), 1.0, 1e-9);
    EXPECT_NEAR(s.values(1, 0), 1.0, 1e-9);
    EXPECT_EQ(s.values(0, 0), kSelfSimilarity);
}

TEST(Similarity, SuccessiveTouchingTrackletsScoreTwo) {
    // 50 fps: gap of 10 frames is 0.2 s < tau.
    const std::vector<Tracklet> ts{line(0, 0, 20, 100), line(1, 29, 20, 100)};
    Eigen::MatrixXd f(2, 2);
    f << 1, 0, 1, 0;
    const auto s = build_similarity(ts, f, ProjectConfig{});
    EXPECT_NEAR(s.values(0, 1), 2.0, 1e-9);
    // Order of the tracklets does not matter.
    const std::vector<Tracklet> swapped{ts[1], ts[0]};
    EXPECT_NEAR(build_similarity(swapped, f, ProjectConfig{}).values(0, 1), 2.0, 1e-9);
}

TEST(Similarity, OrthogonalAndFarIsZero) {
    const std::vector<Tracklet> ts{line(0, 0, 20, 100), line(1, 25, 20, 900)};
    Eigen::MatrixXd f(2, 2);
    f << 1, 0, 0, 1;
    EXPECT_EQ(build_similarity(ts, f, ProjectConfig{}).values(0, 1), 0.0);
}

TEST(Similarity, LongGapDropsLocalization) {
    const std::vector<Tracklet> ts{line(0, 0, 20, 100), line(1, 19 + 51, 20, 100)};  // 1.02 s gap
    Eigen::MatrixXd f(2, 2);
    f << 1, 0, 1, 0;
    EXPECT_NEAR(build_similarity(ts, f, ProjectConfig{}).values(0, 1), 1.0, 1e-9);
}

TEST(Similarity, SymmetricAndBoundedOnRandomInput) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> start(0, 200);
    std::uniform_real_distribution<double> x(0, 300);
    std::normal_distribution<double> n(0, 1);
    std::vector<Tracklet> ts;
    for (int i = 0; i < 30; ++i) ts.push_back(line(i, start(rng), 15, x(rng)));
    Eigen::MatrixXd f(30, 6);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
    const auto s = build_similarity(ts, f, ProjectConfig{});
    ASSERT_EQ(s.ids.size(), 30u);
    for (int i = 0; i < 30; ++i) {
        EXPECT_EQ(s.values(i, i), kSelfSimilarity);
        for (int j = 0; j < 30; ++j) {
            EXPECT_EQ(s.values(i, j), s.values(j, i));
            EXPECT_GE(s.values(i, j), 0.0);
            EXPECT_LE(s.values(i, j), 2.0);
        }
    }
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& row : r) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

TEST(Iterative, DiagonalDominantDisjoint) {
    const std::vector<Tracklet> ts{line(0, 0, 10, 0), line(1, 20, 10, 0), line(2, 40, 10, 0)};
    const auto p = rows({{0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}, {0.8, 0.1, 0.1}});
    const auto a = associate_iterative(p, ts, {});
    EXPECT_EQ(a.entries[0].identity, 1);
    EXPECT_EQ(a.entries[1].identity, 2);
    EXPECT_EQ(a.entries[2].identity, 0);
    for (const auto& e : a.entries) EXPECT_EQ(e.provenance, Provenance::iterative);
}

TEST(Iterative, CoOccurringConflictFallsToNextBest) {
    const std::vector<Tracklet> ts{line(0, 0, 20, 0), line(1, 5, 20, 100)};
    const auto p = rows({{0.05, 0.0, 0.0, 0.9, 0.05}, {0.05, 0.0, 0.15, 0.8, 0.0}});
    const auto a = associate_iterative(p, ts, {});
    EXPECT_EQ(a.entries[0].identity, 3);
    EXPECT_DOUBLE_EQ(a.entries[0].score, 0.9);
    EXPECT_EQ(a.entries[1].identity, 2);
    EXPECT_DOUBLE_EQ(a.entries[1].score, 0.15);
}

TEST(Iterative, FullyForbiddenFallsToClassZero) {
    // Tracklet 2 overlaps the holders of both player identities and has no
    // class-0 probability.
    const std::vector<Tracklet> ts{line(0, 0, 30, 0), line(1, 0, 30, 100), line(2, 10, 10, 200)};
    const auto p = rows({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, 0.5, 0.5}});
    const auto a = associate_iterative(p, ts, {});
    EXPECT_EQ(a.entries[2].identity, 0);
}

TEST(Iterative, AnnotationsAreKeptVerbatim) {
    const std::vector<Tracklet> ts{line(0, 0, 10, 0), line(1, 5, 10, 0)};
    const auto p = rows({{0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}});
    const std::vector<Annotation> ann{{1, 1, 1}, {0, 2, 1}, {0, 0, 2}};
    const auto a = associate_iterative(p, ts, ann);
    EXPECT_EQ(a.entries[0].identity, 0);
    EXPECT_EQ(a.entries[0].provenance, Provenance::annotated);
    EXPECT_EQ(a.entries[1].identity, 1);
    EXPECT_EQ(a.entries[1].provenance, Provenance::annotated);
}

struct RandomCase {
    std::vector<Tracklet> tracklets;
    Eigen::MatrixXd probabilities;
    std::vector<Annotation> annotations;
};

RandomCase random_case(std::mt19937_64& rng, int n_players) {
    std::uniform_int_distribution<int> count(1, 40);
    std::uniform_int_distribution<int> start(0, 300);
    std::uniform_int_distribution<int> len(10, 120);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RandomCase c;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) c.tracklets.push_back(line(i, start(rng), len(rng), 0));
    c.probabilities = Eigen::MatrixXd(n, n_players + 1);
    for (Eigen::Index i = 0; i < c.probabilities.size(); ++i) c.probabilities.data()[i] = std::floor(u(rng) * 20.0);
    c.probabilities = softmax_scores(c.probabilities);
    // A few annotations, never two co-occurring ones with the same identity.
    for (int i = 0; i < n; ++i) {
        if (u(rng) > 0.15) continue;
        const Identity id = static_cast<Identity>(u(rng) * (n_players + 1));
        bool clash = false;
        for (const auto& a : c.annotations) {
            clash = clash || (id != 0 && a.identity == id &&
                              c.tracklets[static_cast<std::size_t>(a.tracklet_id)].overlaps_in_time(c.tracklets[static_cast<std::size_t>(i)]));
        }
        if (!clash) c.annotations.push_back({i, id, 1});
    }
    return c;
}

TEST(Iterative, PlayersNeverOverlapInTime) {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 500; ++k) {
        const auto c = random_case(rng, 7);
        const auto a = associate_iterative(c.probabilities, c.tracklets, c.annotations);
        ASSERT_EQ(a.entries.size(), c.tracklets.size());
        for (std::size_t i = 0; i < a.entries.size(); ++i) {
            for (std::size_t j = i + 1; j < a.entries.size(); ++j) {
                if (a.entries[i].identity == 0 || a.entries[i].identity != a.entries[j].identity) continue;
                ASSERT_FALSE(c.tracklets[i].overlaps_in_time(c.tracklets[j]))
                    << "case " << k << ": tracklets " << i << " and " << j << " share identity " << a.entries[i].identity;
            }
        }
        for (const auto& ann : c.annotations) {
            const auto* e = a.find(ann.tracklet_id);
            ASSERT_NE(e, nullptr);
            EXPECT_EQ(e->identity, ann.identity);
            EXPECT_EQ(e->provenance, Provenance::annotated);
        }
    }
}

TEST(Iterative, InvariantUnderMonotoneTransforms) {
    std::mt19937_64 rng(32);
    const std::vector<std::function<double(double)>> transforms{
        [](double x) { return std::exp(3.0 * x); },
        [](double x) { return x * x * x; },
        [](double x) { return std::log(x + 1e-3); },
        [](double x) { return 10.0 * x - 4.0; },
    };
    for (int k = 0; k < 200; ++k) {
        const auto c = random_case(rng, 5);
        const auto base = associate_iterative(c.probabilities, c.tracklets, c.annotations);
        for (const auto& f : transforms) {
            const Eigen::MatrixXd t = c.probabilities.unaryExpr(f);
            const auto other = associate_iterative(t, c.tracklets, c.annotations);
            for (std::size_t i = 0; i < base.entries.size(); ++i) {
                ASSERT_EQ(other.entries[i].identity, base.entries[i].identity) << "case " << k;
                ASSERT_EQ(other.entries[i].provenance, base.entries[i].provenance);
            }
        }
    }
}

TEST(Iterative, RejectsBadShapes) {
    const std::vector<Tracklet> ts{line(0, 0, 10, 0)};
    EXPECT_THROW(associate_iterative(Eigen::MatrixXd::Zero(2, 3), ts, {}), InvalidArgument);
    const std::vector<Annotation> ann{{0, 5, 1}};
    EXPECT_THROW(associate_iterative(Eigen::MatrixXd::Constant(1, 3, 0.3), ts, ann), InvalidArgument);
}

TEST(Softmax, RowsSumToOne) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 30);
    Eigen::MatrixXd s(20, 8);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
    const auto p = softmax_scores(s);
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
}

SimilarityMatrix random_symmetric(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::bernoulli_distribution sparse(0.3);
    SimilarityMatrix s;
    s.values = Eigen::MatrixXd(n, n);
    for (int i = 0; i < n; ++i) {
        s.ids.push_back(i);
        for (int j = i; j < n; ++j) s.values(i, j) = s.values(j, i) = (i == j ? kSelfSimilarity : (sparse(rng) ? 0.0 : u(rng)));
    }
    return s;
}

TEST(Rnmf, ObjectiveIsNonIncreasingOnRandomMatrices) {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> size(2, 40);
    std::uniform_int_distribution<int> players(1, 8);
    std::bernoulli_distribution annotate(0.1);
    for (int k = 0; k < 100; ++k) {
        const int n = size(rng);
        const int np = players(rng);
        const auto s = random_symmetric(rng, n);
        std::vector<Annotation> ann;
        if (k % 2 == 1) {
            for (int i = 0; i < n; ++i) {
                if (annotate(rng)) ann.push_back({i, static_cast<Identity>(rng() % static_cast<unsigned>(np + 1)), 1});
            }
        }
        RnmfOptions o;
        o.tolerance = 0.0;
        o.iterations = 300;
        o.seed = static_cast<std::uint64_t>(k);
        const auto r = rnmf_factorize(s, np, ann, o);
        ASSERT_EQ(r.a.rows(), n);
        ASSERT_EQ(r.a.cols(), np);
        EXPECT_GE(r.a.minCoeff(), 0.0);
        ASSERT_GE(r.objective.size(), 2u);
        for (std::size_t t = 1; t < r.objective.size(); ++t) {
            ASSERT_LE(r.objective[t], r.objective[t - 1] + 1e-10) << "case " << k << " step " << t;
        }
        EXPECT_NEAR(r.objective.back(), rnmf_objective(s.values, r.a), 1e-9 * (1.0 + r.objective.back()));
    }
}

struct BlockCase {
    SimilarityMatrix s;
    std::vector<int> group;
    std::vector<Annotation> ann;
};

// Two groups, interleaved so recovery does not rely on order; one annotation per group.
BlockCase two_blocks(std::mt19937_64& rng, int n1, int n2, double w_lo, double w_hi, double x_hi) {
    BlockCase c;
    const int n = n1 + n2;
    c.group.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) c.group[static_cast<std::size_t>(i)] = i < n1 ? 0 : 1;
    std::shuffle(c.group.begin(), c.group.end(), rng);
    std::uniform_real_distribution<double> within(w_lo, w_hi), across(0.0, x_hi);
    c.s.values = Eigen::MatrixXd(n, n);
    for (int i = 0; i < n; ++i) {
        c.s.ids.push_back(i);
        for (int j = i; j < n; ++j) {
            const bool same = c.group[static_cast<std::size_t>(i)] == c.group[static_cast<std::size_t>(j)];
            c.s.values(i, j) = c.s.values(j, i) =
                i == j ? kSelfSimilarity : (same ? (w_lo == w_hi ? w_lo : within(rng)) : (x_hi == 0 ? 0 : across(rng)));
        }
    }
    for (int g = 0; g < 2; ++g) {
        const auto it = std::find(c.group.begin(), c.group.end(), g);
        c.ann.push_back({static_cast<TrackletId>(it - c.group.begin()), g + 1, 1});
    }
    return c;
}

bool recovers(const BlockCase& c, const RnmfOptions& o) {
    const auto r = rnmf_factorize(c.s, 2, c.ann, o);
    std::vector<Tracklet> ts;
    for (std::size_t i = 0; i < c.group.size(); ++i) ts.push_back(line(static_cast<TrackletId>(i), 0, 10, 0));
    const auto a = associate_rnmf(r.a, ts, c.ann, 0.1);
    for (std::size_t i = 0; i < c.group.size(); ++i) {
        if (a.entries[i].identity != c.group[i] + 1) return false;
    }
    return true;
}

TEST(Rnmf, RecoversTwoBlocks) {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> size(2, 12);
    struct Range {
        double lo, hi, across;
    };
    const Range ranges[] = {{0.7, 1.0, 0.1}, {1.0, 2.0, 0.2}, {2.0, 2.0, 0.0}, {1.0, 1.0, 0.0}};
    for (int k = 0; k < 400; ++k) {
        const auto& r = ranges[k % 4];
        const auto c = two_blocks(rng, size(rng), size(rng), r.lo, r.hi, r.across);
        RnmfOptions o;
        o.seed = static_cast<std::uint64_t>(k);
        EXPECT_TRUE(recovers(c, o)) << "case " << k;
    }
}

TEST(Rnmf, SingleStartCanStallWithIdentitiesSwapped) {
    // A lone random start sometimes converges to a fixed point where the free
    // rows of each group load on the other group's column; restarts avoid it.
    std::mt19937_64 rng(56);
    int stalled = 0;
    for (int k = 0; k < 200; ++k) {
        const auto c = two_blocks(rng, 5, 6, 2.0, 2.0, 0.0);
        RnmfOptions single;
        single.seed = static_cast<std::uint64_t>(k);
        single.restarts = 1;
        if (recovers(c, single)) continue;
        ++stalled;
        RnmfOptions o;
        o.seed = single.seed;
        EXPECT_TRUE(recovers(c, o)) << "case " << k;
        // The first start is the single-start run, so a later one must have won.
        EXPECT_GT(rnmf_factorize(c.s, 2, c.ann, o).restart, 0);
    }
    EXPECT_GT(stalled, 0);
}

TEST(Rnmf, RestartZeroIsTheSingleStartRun) {
    std::mt19937_64 rng(57);
    const auto s = random_symmetric(rng, 10);
    RnmfOptions one;
    one.restarts = 1;
    one.seed = 3;
    RnmfOptions many = one;
    many.restarts = 8;
    const auto a = rnmf_factorize(s, 3, {}, one);
    const auto b = rnmf_factorize(s, 3, {}, many);
    EXPECT_LE(b.objective.back(), a.objective.back());
    if (b.restart == 0) {
        EXPECT_EQ(a.a, b.a);
    }
    one.restarts = 0;
    EXPECT_THROW(rnmf_factorize(s, 3, {}, one), InvalidArgument);
}

TEST(Rnmf, AnnotatedRowsStayClamped) {
    std::mt19937_64 rng(9);
    const auto s = random_symmetric(rng, 12);
    const std::vector<Annotation> ann{{2, 3, 1}, {5, 0, 1}, {7, 1, 1}, {7, 2, 2}};
    for (int iters : {0, 1, 2, 5, 50}) {
        RnmfOptions o;
        o.iterations = iters;
        o.tolerance = 0.0;
        const auto r = rnmf_factorize(s, 4, ann, o);
        Eigen::RowVectorXd one_hot = Eigen::RowVectorXd::Zero(4);
        one_hot(2) = 1.0;
        EXPECT_EQ(r.a.row(2), one_hot) << iters;
        EXPECT_TRUE(r.a.row(5).isZero()) << iters;
        one_hot.setZero();
        one_hot(1) = 1.0;
        EXPECT_EQ(r.a.row(7), one_hot) << iters;
        EXPECT_EQ(r.objective.size(), static_cast<std::size_t>(iters) + 1);
    }
}

TEST(Rnmf, DeterministicPerSeed) {
    std::mt19937_64 rng(10);
    const auto s = random_symmetric(rng, 15);
    RnmfOptions o;
    o.seed = 4;
    EXPECT_EQ(rnmf_factorize(s, 3, {}, o).a, rnmf_factorize(s, 3, {}, o).a);
}

TEST(AssociateRnmf, RowRules) {
    const std::vector<Tracklet> ts{line(0, 0, 10, 0), line(1, 0, 10, 0), line(2, 0, 10, 0), line(3, 0, 10, 0)};
    const auto a = rows({{0, 1, 0}, {0, 0, 0}, {0.05, 0.02, 0.01}, {0.3, 0.2, 0.6}});
    const auto out = associate_rnmf(a, ts, {}, 0.1);
    EXPECT_EQ(out.entries[0].identity, 2);
    EXPECT_EQ(out.entries[1].identity, 0);
    EXPECT_EQ(out.entries[2].identity, 0);
    EXPECT_EQ(out.entries[3].identity, 3);
    EXPECT_EQ(out.entries[3].provenance, Provenance::rnmf);
    // Conflicts are kept: tracklets 0 and 1 overlap, both may take identity 2.
    const auto conflict = associate_rnmf(rows({{0, 1, 0}, {0, 0.9, 0}, {0, 0, 0}, {0, 0, 0}}), ts, {}, 0.1);
    EXPECT_EQ(conflict.entries[0].identity, 2);
    EXPECT_EQ(conflict.entries[1].identity, 2);
    const std::vector<Annotation> ann{{3, 0, 1}};
    const auto pinned = associate_rnmf(a, ts, ann, 0.1);
    EXPECT_EQ(pinned.entries[3].identity, 0);
    EXPECT_EQ(pinned.entries[3].provenance, Provenance::annotated);
}

TEST(AssociationFile, RoundTrip) {
    test::TempDir dir;
    Association a;
    a.method = "rnmf";
    a.checkpoint = "0123456789abcdef";
    a.round = 3;
    a.entries = {{1, 2, Provenance::annotated, 1.0}, {2, 0, Provenance::unassigned, 0.0}, {3, 1, Provenance::rnmf, 0.625}};
    save_association(dir / "a.json", a);
    const auto b = load_association(dir / "a.json");
    EXPECT_EQ(b.method, a.method);
    EXPECT_EQ(b.checkpoint, a.checkpoint);
    EXPECT_EQ(b.round, a.round);
    EXPECT_EQ(b.entries, a.entries);
}

}  // namespace
}  // namespace playertrack
