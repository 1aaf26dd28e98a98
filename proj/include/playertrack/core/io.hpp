#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack::io {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

// MOTChallenge text layout: frame,id,left,top,width,height,conf,x,y,z with
// 1-based frames on disk and 0-based frames in memory.

/// Detections sorted by frame. `embedding_row` is the 0-based index of the
/// data line the detection came from. Lines below `min_confidence` are
/// dropped but still consume their row index.
std::vector<Detection> load_detections(const fs::path& path, double min_confidence = 0.0);
void save_detections(const fs::path& path, std::span<const Detection> detections);

std::vector<GroundTruthBox> load_ground_truth(const fs::path& path);
void save_ground_truth(const fs::path& path, std::span<const GroundTruthBox> boxes);

// Binary embedding layout: "TLEB", u64 rows, u64 dim, rows*dim f32, u32 CRC-32
// of the f32 payload; all little-endian.

/// Throws FormatError on bad magic, truncation, CRC mismatch, non-finite
/// values, or when `expected_dim` is set and differs from the header.
EmbeddingMatrix load_embeddings(const fs::path& path, std::optional<std::size_t> expected_dim = {});
void save_embeddings(const fs::path& path, const EmbeddingMatrix& matrix);

std::uint32_t crc32(std::span<const unsigned char> bytes);

nlohmann::json to_json(const ProjectConfig& config);
ProjectConfig config_from_json(const nlohmann::json& j);
ProjectConfig load_config(const fs::path& path);
void save_config(const fs::path& path, const ProjectConfig& config);

nlohmann::json tracklets_to_json(std::span<const Tracklet> tracklets);
std::vector<Tracklet> tracklets_from_json(const nlohmann::json& j);
std::vector<Tracklet> load_tracklets(const fs::path& path);
void save_tracklets(const fs::path& path, std::span<const Tracklet> tracklets);

/// Annotation log in append order; see `latest_annotations` for the
/// effective labels.
std::vector<Annotation> load_annotations(const fs::path& path);
void save_annotations(const fs::path& path, std::span<const Annotation> log);

/// One entry per annotated tracklet, the most recent label winning, sorted by
/// tracklet id.
std::vector<Annotation> latest_annotations(std::span<const Annotation> log);

nlohmann::json read_json(const fs::path& path);
/// Writes through a temporary file and renames it into place.
void write_json(const fs::path& path, const nlohmann::json& j);
void write_file_atomic(const fs::path& path, std::span<const unsigned char> bytes);
std::vector<unsigned char> read_file(const fs::path& path);

}  // namespace playertrack::io
