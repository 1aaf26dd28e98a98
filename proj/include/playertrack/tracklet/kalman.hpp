#pragma once

#include <Eigen/Dense>

#include "playertrack/core/types.hpp"

namespace playertrack {

using StateVector = Eigen::Matrix<double, 8, 1>;
using StateCovariance = Eigen::Matrix<double, 8, 8>;

/// Constant-velocity box state: (cx, cy, w, h, vcx, vcy, vw, vh), velocities in
/// pixels per frame.
struct TrackState {
    StateVector mean = StateVector::Zero();
    StateCovariance covariance = StateCovariance::Identity();

    BoundingBox box() const { return BoundingBox::from_center(mean(0), mean(1), mean(2), mean(3)); }
};

/// Noise standard deviations are proportional to the box height.
struct KalmanParams {
    double std_weight_position = 1.0 / 20.0;
    double std_weight_velocity = 1.0 / 160.0;
    double measurement_noise_scale = 1.0;
};

TrackState kalman_initiate(const BoundingBox& box, const KalmanParams& params = {});
TrackState kalman_predict(const TrackState& state, const KalmanParams& params = {});
TrackState kalman_update(const TrackState& state, const BoundingBox& measurement,
                         const KalmanParams& params = {});

/// Generic Kalman correction step: returns the posterior (mean, covariance)
/// for observation model z = H x + v, v ~ N(0, R).
template <int N, int M>
std::pair<Eigen::Matrix<double, N, 1>, Eigen::Matrix<double, N, N>> kalman_correct(
    const Eigen::Matrix<double, N, 1>& mean, const Eigen::Matrix<double, N, N>& covariance,
    const Eigen::Matrix<double, M, N>& observation, const Eigen::Matrix<double, M, 1>& measurement,
    const Eigen::Matrix<double, M, M>& noise) {
    const Eigen::Matrix<double, M, M> innovation_cov = observation * covariance * observation.transpose() + noise;
    const Eigen::Matrix<double, N, M> gain =
        innovation_cov.llt().solve(observation * covariance).transpose();
    const Eigen::Matrix<double, N, 1> posterior_mean = mean + gain * (measurement - observation * mean);
    Eigen::Matrix<double, N, N> posterior_cov = covariance - gain * innovation_cov * gain.transpose();
    posterior_cov = 0.5 * (posterior_cov + posterior_cov.transpose()).eval();
    return {posterior_mean, posterior_cov};
}

}  // namespace playertrack
