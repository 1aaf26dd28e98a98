#include <cmath>
#include <string>

#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/error.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack {

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_) {
        throw InvalidArgument("embedding matrix: expected " + std::to_string(rows_ * dim_) + " values, got " +
                              std::to_string(data_.size()));
    }
}

void ProjectConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("config: ") + what);
    };
    require(n_players >= 1, "n_players must be >= 1");
    require(fps > 0.0 && std::isfinite(fps), "fps must be positive");
    require(l_min >= 1, "l_min must be >= 1");
    require(mu > 0.0 && mu <= 1.0, "mu must be in (0, 1]");
    require(iou_min >= 0.0 && iou_min <= 1.0, "iou_min must be in [0, 1]");
    require(d_t >= 2, "d_t must be >= 2");
    require(l_min >= d_t, "l_min must be >= d_t so every tracklet can be resampled");
    require(d1 >= 1 && d2 >= 1, "d1 and d2 must be positive");
    require(heads >= 1 && d2 % heads == 0, "d2 must be divisible by heads");
    require(n_queries >= 1, "n_queries must be >= 1");
    require(n_selected_queries >= 1 && n_selected_queries <= n_queries, "n_selected_queries must be in [1, n_queries]");
    require(encoder_layers >= 0 && decoder_layers >= 1, "need >= 0 encoder and >= 1 decoder layers");
    require(alpha == 0 || alpha == 1, "alpha must be 0 or 1");
    require(training.epochs >= 0, "epochs must be >= 0");
    require(training.learning_rate >= 0.0, "learning_rate must be >= 0");
    require(training.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(training.batch_size >= 1, "batch_size must be >= 1");
    require(eta_app > 0.0 && eta_loc >= 0.0, "eta_app must be > 0 and eta_loc >= 0");
    require(tau >= 0.0, "tau must be >= 0");
    require(rnmf_iterations >= 0, "rnmf_iterations must be >= 0");
}

}  // namespace playertrack
