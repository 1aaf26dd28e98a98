#include "playertrack/core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "playertrack/core/error.hpp"

namespace playertrack {

void BoundingBox::validate() const {
    if (!std::isfinite(left) || !std::isfinite(top) || !std::isfinite(width) ||
        !std::isfinite(height)) {
        throw InvalidArgument("bounding box has a non-finite coordinate");
    }
    if (width <= 0.0 || height <= 0.0) {
        throw InvalidArgument("bounding box width and height must be positive");
    }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    // right() - left can differ from width by an ulp.
    if (a == b) return 1.0;
    const double iw = std::min(a.right(), b.right()) - std::max(a.left, b.left);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    const double inter = iw * ih;
    // Sorted operands keep the result symmetric under FMA contraction.
    const double sa = a.area();
    const double sb = b.area();
    const double uni = std::min(sa, sb) + std::max(sa, sb) - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> resample_indices(std::size_t length, std::size_t d_t) {
    if (d_t < 2) {
        throw InvalidArgument("resample_indices: d_t must be at least 2");
    }
    if (length < d_t) {
        throw InvalidArgument("resample_indices: sequence of length " + std::to_string(length) +
                              " is shorter than d_t = " + std::to_string(d_t));
    }
    std::vector<std::size_t> out(d_t);
    const double step = static_cast<double>(length - 1) / static_cast<double>(d_t - 1);
    for (std::size_t i = 0; i < d_t; ++i) {
        out[i] = static_cast<std::size_t>(std::llround(static_cast<double>(i) * step));
    }
    out.back() = length - 1;
    return out;
}

}  // namespace playertrack
