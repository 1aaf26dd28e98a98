#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "playertrack/association/association.hpp"
#include "playertrack/association/similarity.hpp"

namespace playertrack {

struct RnmfOptions {
    int iterations = 500;
    double tolerance = 1e-9;  // stop once the objective improves by less
    double epsilon = 1e-12;   // added to every denominator
    double exponent = 0.5;    // power applied to the multiplicative ratio
    int restarts = 8;         // random initializations; the lowest final objective wins
    std::uint64_t seed = 0;
};

struct RnmfResult {
    Eigen::MatrixXd a;               // N_t x N_p, elementwise >= 0
    std::vector<double> objective;   // ||S - A A^T||_F^2 of the kept start, initial value first
    int restart = 0;                 // index of the kept start
};

double rnmf_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a);

/// Factorizes S ~ A A^T with multiplicative updates. Rows of annotated
/// tracklets are held at the one-hot vector of their identity (all zeros for
/// identity 0). `annotations` may be a raw log; the latest label wins.
/// A single start can stall at a fixed point with two identities swapped, so
/// `restarts` initializations are drawn in turn from one seeded stream and the
/// lowest final objective is kept (earliest start on ties).
RnmfResult rnmf_factorize(const SimilarityMatrix& s, int n_players, std::span<const Annotation> annotations,
                          const RnmfOptions& options = {});

/// Row argmax of A, with rows whose maximum is below theta_0 sent to identity
/// 0. Conflicting assignments are kept as-is.
Association associate_rnmf(const Eigen::MatrixXd& a, std::span<const Tracklet> tracklets,
                           std::span<const Annotation> annotations, double theta_0);

}  // namespace playertrack
