#include <gtest/gtest.h>

#include <random>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/core/io.hpp"
#include "support.hpp"

namespace playertrack {
namespace {

using test::TempDir;
using test::write_text;

TEST(Iou, IdenticalBoxes) { EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0); }

TEST(Iou, DisjointBoxes) { EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {5, 5, 1, 1}), 0.0); }

TEST(Iou, HalfShiftedSquares) {
    // intersection 1x2 = 2, union 4 + 4 - 2 = 6
    EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 0, 2, 2}), 2.0 / 6.0, 1e-12);
}

TEST(Iou, SymmetricBoundedAndOneOnlyWhenIdentical) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> pos(0.0, 20.0);
    std::uniform_real_distribution<double> size(0.5, 10.0);
    for (int k = 0; k < 2000; ++k) {
        const BoundingBox a{pos(rng), pos(rng), size(rng), size(rng)};
        const BoundingBox b{pos(rng), pos(rng), size(rng), size(rng)};
        const double ab = iou(a, b);
        EXPECT_EQ(ab, iou(b, a));
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
        EXPECT_LT(ab, 1.0);
        EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    }
}

TEST(ResampleIndices, Examples) {
    std::vector<std::size_t> id(10);
    std::iota(id.begin(), id.end(), 0);
    EXPECT_EQ(resample_indices(10, 10), id);
    EXPECT_EQ(resample_indices(19, 10), (std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18}));
    EXPECT_EQ(resample_indices(100, 10), (std::vector<std::size_t>{0, 11, 22, 33, 44, 55, 66, 77, 88, 99}));
}

TEST(ResampleIndices, Properties) {
    for (std::size_t d_t = 2; d_t <= 12; ++d_t) {
        for (std::size_t length = d_t; length < 300; length += 7) {
            const auto idx = resample_indices(length, d_t);
            ASSERT_EQ(idx.size(), d_t);
            EXPECT_EQ(idx.front(), 0u);
            EXPECT_EQ(idx.back(), length - 1);
            EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
        }
    }
}

TEST(LoadDetections, MotLine) {
    TempDir dir;
    write_text(dir / "det.csv", "1,-1,100,200,50,120,0.98,-1,-1,-1\n");
    const auto d = io::load_detections(dir / "det.csv");
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].frame, 0);
    EXPECT_EQ(d[0].box, (BoundingBox{100, 200, 50, 120}));
    EXPECT_DOUBLE_EQ(d[0].confidence, 0.98);
    EXPECT_EQ(d[0].embedding_row, 0u);
}

TEST(LoadDetections, EmptyFile) {
    TempDir dir;
    write_text(dir / "det.csv", "");
    EXPECT_TRUE(io::load_detections(dir / "det.csv").empty());
}

TEST(LoadDetections, NegativeWidthNamesTheLine) {
    TempDir dir;
    write_text(dir / "det.csv", "1,-1,0,0,5,5,0.9,-1,-1,-1\n2,-1,100,200,-3,120,0.98,-1,-1,-1\n");
    try {
        io::load_detections(dir / "det.csv");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(LoadDetections, ConfidenceFilterKeepsRowIndex) {
    TempDir dir;
    write_text(dir / "det.csv", "1,-1,0,0,5,5,0.2,-1,-1,-1\n1,-1,10,0,5,5,0.9,-1,-1,-1\n");
    const auto d = io::load_detections(dir / "det.csv", 0.5);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].embedding_row, 1u);
}

TEST(LoadDetections, RoundTripIsExact) {
    TempDir dir;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    std::vector<Detection> dets;
    for (int i = 0; i < 200; ++i) {
        dets.push_back({i / 4, {u(rng), u(rng), 1.0 + u(rng), 1.0 + u(rng)}, u(rng) / 1000.0,
                        static_cast<std::size_t>(i)});
    }
    io::save_detections(dir / "det.csv", dets);
    EXPECT_EQ(io::load_detections(dir / "det.csv"), dets);
}

TEST(LoadGroundTruth, RoundTripIsExact) {
    TempDir dir;
    std::vector<GroundTruthBox> gt{{0, 1, {1.25, 2.5, 30, 60}}, {0, 2, {100.125, 7, 31, 62}}, {3, 1, {0.1, 0.2, 0.3, 0.4}}};
    io::save_ground_truth(dir / "gt.csv", gt);
    EXPECT_EQ(io::load_ground_truth(dir / "gt.csv"), gt);
}

TEST(Embeddings, TwoByFour) {
    TempDir dir;
    EmbeddingMatrix m(2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
    io::save_embeddings(dir / "e.bin", m);
    const auto back = io::load_embeddings(dir / "e.bin");
    EXPECT_EQ(back.rows(), 2u);
    EXPECT_EQ(back.dim(), 4u);
    EXPECT_EQ(back, m);
}

TEST(Embeddings, TruncatedPayload) {
    TempDir dir;
    io::save_embeddings(dir / "e.bin", EmbeddingMatrix(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}));
    auto bytes = io::read_file(dir / "e.bin");
    // Declare three rows in the header while only two are present.
    bytes[4] = 3;
    io::write_file_atomic(dir / "e.bin", bytes);
    try {
        io::load_embeddings(dir / "e.bin");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
    }
}

TEST(Embeddings, ChecksumAndMagic) {
    TempDir dir;
    io::save_embeddings(dir / "e.bin", EmbeddingMatrix(1, 2, {1, 2}));
    auto bytes = io::read_file(dir / "e.bin");
    auto flipped = bytes;
    flipped[20] ^= 0x01;
    io::write_file_atomic(dir / "bad.bin", flipped);
    EXPECT_THROW(io::load_embeddings(dir / "bad.bin"), FormatError);
    auto magic = bytes;
    magic[0] = 'X';
    io::write_file_atomic(dir / "magic.bin", magic);
    EXPECT_THROW(io::load_embeddings(dir / "magic.bin"), FormatError);
}

TEST(Embeddings, FullWidthMatchesConfiguredDimension) {
    TempDir dir;
    const ProjectConfig config;
    std::vector<float> data(3 * 2048);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i % 17) / 17.0f;
    io::save_embeddings(dir / "e.bin", EmbeddingMatrix(3, 2048, data));
    EXPECT_EQ(io::load_embeddings(dir / "e.bin", static_cast<std::size_t>(config.d1)).dim(), 2048u);
    EXPECT_THROW(io::load_embeddings(dir / "e.bin", 128), FormatError);
}

TEST(Tracklets, RoundTripIsExact) {
    TempDir dir;
    std::vector<Tracklet> ts(2);
    ts[0].id = 1;
    ts[1].id = 2;
    for (int f = 0; f < 12; ++f) {
        ts[0].detections.push_back({f, {f * 1.5, 3.25, 10, 20}, 0.875, static_cast<std::size_t>(2 * f)});
        ts[1].detections.push_back({f + 3, {f * 2.0, 100.0 / 3.0, 11, 21}, 0.5, static_cast<std::size_t>(2 * f + 1)});
    }
    io::save_tracklets(dir / "t.json", ts);
    EXPECT_EQ(io::load_tracklets(dir / "t.json"), ts);
}

TEST(Annotations, RoundTripAndLatestWins) {
    TempDir dir;
    const std::vector<Annotation> log{{5, 1, 1}, {3, 0, 1}, {5, 2, 2}};
    io::save_annotations(dir / "a.json", log);
    EXPECT_EQ(io::load_annotations(dir / "a.json"), log);
    const auto latest = io::latest_annotations(log);
    ASSERT_EQ(latest.size(), 2u);
    EXPECT_EQ(latest[0], (Annotation{3, 0, 1}));
    EXPECT_EQ(latest[1], (Annotation{5, 2, 2}));
}

TEST(Config, RoundTripAndValidation) {
    TempDir dir;
    ProjectConfig c;
    c.n_players = 5;
    c.eta_app = 0.3;
    c.training.epochs = 7;
    io::save_config(dir / "config.json", c);
    EXPECT_EQ(io::load_config(dir / "config.json"), c);

    ProjectConfig bad;
    bad.l_min = 5;  // below d_t
    EXPECT_THROW(bad.validate(), InvalidArgument);
    bad = ProjectConfig{};
    bad.heads = 7;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Crc32, KnownVector) {
    const std::string s = "123456789";
    EXPECT_EQ(io::crc32(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size())), 0xCBF43926u);
}

}  // namespace
}  // namespace playertrack
