#include "playertrack/tracklet/hungarian.hpp"

#include <algorithm>
#include <cmath>

#include "playertrack/core/error.hpp"

namespace playertrack {

namespace {

// Rows <= cols. Returns col index per row. Shortest augmenting path with
// dual potentials, O(n^2 m).
std::vector<int> solve_rows_le_cols(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    const int m = static_cast<int>(a.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Assignment hungarian_assign(const Eigen::MatrixXd& cost) {
    Assignment out;
    if (cost.rows() == 0 || cost.cols() == 0) return out;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    bool any_allowed = false;
    for (Eigen::Index i = 0; i < cost.size(); ++i) {
        const double c = cost.data()[i];
        if (std::isnan(c) || c == -std::numeric_limits<double>::infinity()) {
            throw InvalidArgument("hungarian_assign: costs must be finite or the forbidden sentinel");
        }
        if (std::isfinite(c)) {
            lo = std::min(lo, c);
            hi = std::max(hi, c);
            any_allowed = true;
        }
    }
    if (!any_allowed) return out;

    // Shift allowed costs to [0, hi-lo]; a forbidden pair costs more than any
    // complete assignment of allowed pairs, so the solver uses one only when
    // no allowed alternative exists.
    const Eigen::Index k = std::min(cost.rows(), cost.cols());
    const double big = (hi - lo + 1.0) * static_cast<double>(k + 1);
    Eigen::MatrixXd work = cost.unaryExpr([&](double c) { return std::isfinite(c) ? c - lo : big; });

    const bool transposed = work.rows() > work.cols();
    if (transposed) work.transposeInPlace();
    const auto match = solve_rows_le_cols(work);

    for (int r = 0; r < static_cast<int>(match.size()); ++r) {
        const int c = match[r];
        if (c < 0) continue;
        const int row = transposed ? c : r;
        const int col = transposed ? r : c;
        if (!std::isfinite(cost(row, col))) continue;
        out.pairs.emplace_back(row, col);
        out.cost += cost(row, col);
    }
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

}  // namespace playertrack
