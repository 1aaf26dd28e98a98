#include "playertrack/tracklet/kalman.hpp"

namespace playertrack {

TrackState kalman_initiate(const BoundingBox& box, const KalmanParams& params) {
    TrackState s;
    s.mean << box.center_x(), box.center_y(), box.width, box.height, 0, 0, 0, 0;
    const double h = box.height;
    const double p = 2.0 * params.std_weight_position * h;
    const double v = 10.0 * params.std_weight_velocity * h;
    Eigen::Matrix<double, 8, 1> std;
    std << p, p, p, p, v, v, v, v;
    s.covariance = std.array().square().matrix().asDiagonal();
    return s;
}

TrackState kalman_predict(const TrackState& state, const KalmanParams& params) {
    StateCovariance f = StateCovariance::Identity();
    f.topRightCorner<4, 4>().setIdentity();

    const double h = state.mean(3);
    const double p = params.std_weight_position * h;
    const double v = params.std_weight_velocity * h;
    Eigen::Matrix<double, 8, 1> std;
    std << p, p, p, p, v, v, v, v;
    const StateCovariance q = std.array().square().matrix().asDiagonal();

    TrackState out;
    out.mean = f * state.mean;
    out.covariance = f * state.covariance * f.transpose() + q;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

TrackState kalman_update(const TrackState& state, const BoundingBox& measurement, const KalmanParams& params) {
    Eigen::Matrix<double, 4, 8> h = Eigen::Matrix<double, 4, 8>::Zero();
    h.leftCols<4>().setIdentity();
    Eigen::Matrix<double, 4, 1> z;
    z << measurement.center_x(), measurement.center_y(), measurement.width, measurement.height;

    const double r = params.measurement_noise_scale * params.std_weight_position * state.mean(3);
    const Eigen::Matrix<double, 4, 4> noise = Eigen::Matrix<double, 4, 4>::Identity() * (r * r);

    auto [mean, cov] = kalman_correct<8, 4>(state.mean, state.covariance, h, z, noise);
    return {mean, cov};
}

}  // namespace playertrack
