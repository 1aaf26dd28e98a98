#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "playertrack/core/embedding_matrix.hpp"
#include "playertrack/core/types.hpp"
#include "playertrack/reid/model.hpp"

namespace playertrack::nn {

/// d_t x d1 input: embedding rows at evenly resampled tracklet positions.
template <typename T>
Mat<T> tracklet_input(const Tracklet& tracklet, const EmbeddingMatrix& embeddings, int d_t);

template <typename T>
struct TrainingSample {
    TrackletId tracklet_id = 0;
    Mat<T> input;
    int label = 0;
};

struct EpochLoss {
    int epoch = 0;
    double id = 0.0;
    double triplet = 0.0;
    double total = 0.0;
};

struct TrainOptions {
    TrainingSettings settings;
    int alpha = 0;
    std::uint64_t seed = 0;
    /// Called after every epoch; may be empty.
    std::function<void(const EpochLoss&)> on_epoch;
    /// Polled between batches; training stops early with an Error when set.
    const std::atomic<bool>* cancel = nullptr;
};

template <typename T>
struct TrainResult {
    ModelParams<T> params;
    std::vector<EpochLoss> curve;
    int alpha = 0;  // alpha actually used (1 falls back to 0 with < 2 labels)
};

/// AdamW with decoupled weight decay applied to every trainable tensor.
template <typename T>
class AdamW {
public:
    AdamW(const ModelParams<T>& like, double learning_rate, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    void step(ModelParams<T>& params, const ModelParams<T>& grads);
    int steps() const { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    int t_ = 0;
    ModelParams<T> m_;
    ModelParams<T> v_;
};

/// Running-statistics momentum of the feature head.
inline constexpr double kBatchNormMomentum = 0.1;

/// Batches for one epoch, as indices into `labels`. With `pk` set, each batch
/// holds 2 labels x (batch_size / 2) samples; otherwise a shuffled partition.
std::vector<std::vector<std::size_t>> epoch_batches(std::span<const int> labels, int batch_size, bool pk,
                                                    std::mt19937_64& rng);

/// Trains from `initial` on the annotated samples. Deterministic for fixed
/// seed and sample order.
template <typename T>
TrainResult<T> train(ModelParams<T> initial, std::span<const TrainingSample<T>> samples, const TrainOptions& options);

/// Convenience: builds samples from the latest annotations and trains a
/// freshly initialized model in single precision.
TrainResult<float> train(std::span<const Tracklet> tracklets, const EmbeddingMatrix& embeddings,
                         std::span<const Annotation> annotations, const ProjectConfig& config, const TrainOptions& options);

struct TrackletOutput {
    TrackletId tracklet_id = 0;
    RowVec<float> scores;    // S_t (logits)
    RowVec<float> features;  // F_t
};

/// Inference over every tracklet, in input order.
std::vector<TrackletOutput> infer_all(std::span<const Tracklet> tracklets, const EmbeddingMatrix& embeddings,
                                      const ModelParams<float>& params);

void write_loss_curve_csv(const std::filesystem::path& path, std::span<const EpochLoss> curve);

}  // namespace playertrack::nn
