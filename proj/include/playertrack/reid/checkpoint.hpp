#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "playertrack/core/types.hpp"
#include "playertrack/reid/model.hpp"

namespace playertrack::nn {

// Layout (little-endian): "TLCK", u32 version, u32 n + n bytes of JSON config
// echo, u32 tensor count, then per tensor: u32 n + name, u64 rows, u64 cols,
// rows*cols f32; finally u32 CRC-32 of every preceding byte.

struct Checkpoint {
    ProjectConfig config;
    ModelParams<float> params;
};

std::vector<unsigned char> encode_checkpoint(const ProjectConfig& config, const ModelParams<float>& params);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, const ProjectConfig& config, const ModelParams<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 16 hex digits (FNV-1a 64) identifying checkpoint contents.
std::string content_hash(std::span<const unsigned char> bytes);

}  // namespace playertrack::nn
