#pragma once

#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace playertrack {

/// Cost marking a disallowed pair.
inline constexpr double kForbiddenCost = std::numeric_limits<double>::infinity();

struct Assignment {
    std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
    double cost = 0.0;
};

/// Minimum-cost rectangular assignment (Kuhn-Munkres with potentials).
/// Forbidden pairs are never returned; among assignments using the largest
/// possible number of allowed pairs, the total cost is minimal.
Assignment hungarian_assign(const Eigen::MatrixXd& cost);

}  // namespace playertrack
