#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "playertrack/simulate/simulator.hpp"

namespace playertrack::test {

/// Directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("playertrack-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small, fast game: 2 + 2 players, one distractor, 400 frames, 32-d embeddings.
inline sim::SimConfig small_game(std::uint64_t seed) {
    sim::SimConfig c;
    c.players_per_team = 2;
    c.distractors = 1;
    c.frames = 400;
    c.embedding_dim = 32;
    c.seed = seed;
    return c;
}

/// Minimum of sum cost(i, perm(i)) over every injective row -> column map
/// (rows <= cols), skipping infinite entries; returns the pair count and cost
/// of the best map using the most finite pairs.
inline std::pair<int, double> brute_force_assignment(const Eigen::MatrixXd& cost) {
    const bool transpose = cost.rows() > cost.cols();
    const Eigen::MatrixXd c = transpose ? Eigen::MatrixXd(cost.transpose()) : cost;
    std::vector<int> cols(static_cast<std::size_t>(c.cols()));
    std::iota(cols.begin(), cols.end(), 0);
    int best_pairs = -1;
    double best = 0.0;
    do {
        int pairs = 0;
        double total = 0.0;
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            const double v = c(r, cols[static_cast<std::size_t>(r)]);
            if (std::isfinite(v)) {
                ++pairs;
                total += v;
            }
        }
        if (pairs > best_pairs || (pairs == best_pairs && total < best)) {
            best_pairs = pairs;
            best = total;
        }
    } while (std::next_permutation(cols.begin(), cols.end()));
    return {best_pairs, best};
}

}  // namespace playertrack::test
