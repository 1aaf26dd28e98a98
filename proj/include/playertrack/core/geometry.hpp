#pragma once

#include <cstddef>
#include <vector>

#include "playertrack/core/types.hpp"

namespace playertrack {

/// Intersection over union of two boxes, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

/// Evenly spaced indices into a sequence of `length` items:
/// round(i * (length - 1) / (d_t - 1)) for i in [0, d_t).
/// Requires length >= d_t >= 2.
std::vector<std::size_t> resample_indices(std::size_t length, std::size_t d_t);

inline double clip_unit(double x) { return x > 1.0 ? 1.0 : (x < 0.0 ? 0.0 : x); }

}  // namespace playertrack
