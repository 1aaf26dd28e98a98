#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "playertrack/reid/model.hpp"

namespace playertrack::nn {

struct TensorGradError {
    std::string name;
    double max_relative_error = 0.0;
};

struct GradCheckReport {
    int alpha = 0;
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::vector<TensorGradError> tensors;

    bool passed(double tolerance = 1e-4) const { return max_relative_error < tolerance; }
};

/// Tiny double-precision configuration used by the finite-difference check.
ModelShape gradcheck_shape();

/// Compares the analytic gradient of the training loss with central finite
/// differences for every parameter of a randomly initialized tiny model.
/// alpha = 0 uses a batch of two samples, alpha = 1 a batch of four (two
/// labels x two samples). Relative error per element is
/// |analytic - numeric| / max(|analytic| + |numeric|, floor).
GradCheckReport gradient_check(int alpha, std::uint64_t seed, double step = 1e-5, double floor = 1e-6);

}  // namespace playertrack::nn
