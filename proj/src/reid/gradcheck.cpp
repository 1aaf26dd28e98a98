#include "playertrack/reid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace playertrack::nn {

ModelShape gradcheck_shape() {
    ModelShape s;
    s.d1 = 6;
    s.d2 = 8;
    s.d_t = 3;
    s.n_queries = 2;
    s.n_selected_queries = 1;
    s.n_classes = 3;
    s.encoder_layers = 1;
    s.decoder_layers = 1;
    s.heads = 2;
    return s;
}

GradCheckReport gradient_check(int alpha, std::uint64_t seed, double step, double floor) {
    const ModelShape shape = gradcheck_shape();
    ModelParams<double> params = init_params<double>(shape, seed);
    // Perturb biases and norm parameters away from their initial constants so
    // their gradients are exercised at a generic point.
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> noise(0.0, 0.1);
    params.visit([&](const std::string& name, Mat<double>& m) {
        if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".gamma")) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise(rng);
        }
    });

    const std::vector<int> labels = alpha == 0 ? std::vector<int>{1, 2} : std::vector<int>{1, 2, 1, 2};
    std::vector<Mat<double>> inputs;
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t b = 0; b < labels.size(); ++b) {
        Mat<double> x(shape.d_t, shape.d1);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
        inputs.push_back(std::move(x));
    }

    ModelParams<double> analytic = params.zeros_like();
    training_loss<double>(params, inputs, labels, alpha, &analytic);

    std::vector<const Mat<double>*> grads;
    analytic.visit([&](const std::string&, const Mat<double>& m) { grads.push_back(&m); });

    GradCheckReport report;
    report.alpha = alpha;
    std::size_t t = 0;
    params.visit([&](const std::string& name, Mat<double>& m) {
        const Mat<double>& g = *grads[t++];
        TensorGradError err{name, 0.0};
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double saved = m.data()[i];
            m.data()[i] = saved + step;
            const double up = training_loss<double>(params, inputs, labels, alpha, nullptr).total;
            m.data()[i] = saved - step;
            const double down = training_loss<double>(params, inputs, labels, alpha, nullptr).total;
            m.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = g.data()[i];
            const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
            err.max_relative_error = std::max(err.max_relative_error, rel);
        }
        if (err.max_relative_error >= report.max_relative_error) {
            report.max_relative_error = err.max_relative_error;
            report.worst_tensor = name;
        }
        report.tensors.push_back(std::move(err));
    });
    return report;
}

}  // namespace playertrack::nn
