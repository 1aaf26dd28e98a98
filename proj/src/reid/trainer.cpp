#include "playertrack/reid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "playertrack/core/error.hpp"
#include "playertrack/core/geometry.hpp"
#include "playertrack/core/io.hpp"
#include "playertrack/core/log.hpp"

namespace playertrack::nn {

template <typename T>
Mat<T> tracklet_input(const Tracklet& tracklet, const EmbeddingMatrix& embeddings, int d_t) {
    const auto idx = resample_indices(tracklet.length(), static_cast<std::size_t>(d_t));
    Mat<T> out(d_t, static_cast<Eigen::Index>(embeddings.dim()));
    for (int i = 0; i < d_t; ++i) {
        const std::size_t row = tracklet.detections[idx[static_cast<std::size_t>(i)]].embedding_row;
        if (row >= embeddings.rows()) {
            throw InvalidArgument("tracklet " + std::to_string(tracklet.id) + " references embedding row " +
                                  std::to_string(row) + " beyond the matrix (" + std::to_string(embeddings.rows()) +
                                  " rows)");
        }
        const auto src = embeddings.row(row);
        for (std::size_t c = 0; c < src.size(); ++c) out(i, static_cast<Eigen::Index>(c)) = static_cast<T>(src[c]);
    }
    return out;
}

template <typename T>
AdamW<T>::AdamW(const ModelParams<T>& like, double learning_rate, double weight_decay, double beta1, double beta2,
                double eps)
    : lr_(learning_rate),
      wd_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(like.zeros_like()),
      v_(like.zeros_like()) {}

namespace {

template <typename T>
struct AdamWConstants {
    T step, inv_bias2, b1, b2, decay, eps;
};

// Plain pointer loop so the compiler can vectorize it.
template <typename T>
void adamw_update(T* __restrict p, T* __restrict m, T* __restrict v, const T* __restrict g, Eigen::Index n,
                  const AdamWConstants<T> c) {
    for (Eigen::Index k = 0; k < n; ++k) {
        m[k] = c.b1 * m[k] + (T(1) - c.b1) * g[k];
        v[k] = c.b2 * v[k] + (T(1) - c.b2) * g[k] * g[k];
        p[k] = p[k] * c.decay - c.step * m[k] / (std::sqrt(v[k]) * c.inv_bias2 + c.eps);
    }
}

}  // namespace

template <typename T>
void AdamW<T>::step(ModelParams<T>& params, const ModelParams<T>& grads) {
    ++t_;
    const T lr = static_cast<T>(lr_);
    const T decay = static_cast<T>(1.0 - lr_ * wd_);
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    const T bias1 = static_cast<T>(1.0 - std::pow(beta1_, t_));
    const T bias2_sqrt = static_cast<T>(std::sqrt(1.0 - std::pow(beta2_, t_)));
    const T eps = static_cast<T>(eps_);

    std::vector<const Mat<T>*> g;
    grads.visit([&](const std::string&, const Mat<T>& m) { g.push_back(&m); });
    std::vector<Mat<T>*> m1;
    m_.visit([&](const std::string&, Mat<T>& m) { m1.push_back(&m); });
    std::vector<Mat<T>*> m2;
    v_.visit([&](const std::string&, Mat<T>& m) { m2.push_back(&m); });

    std::size_t i = 0;
    params.visit([&](const std::string&, Mat<T>& p) {
        auto& m = *m1[i];
        auto& v = *m2[i];
        const auto& gr = *g[i];
        ++i;
        adamw_update(p.data(), m.data(), v.data(), gr.data(), p.size(),
                     {lr / bias1, T(1) / bias2_sqrt, b1, b2, decay, eps});
    });
}

std::vector<std::vector<std::size_t>> epoch_batches(std::span<const int> labels, int batch_size, bool pk,
                                                    std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> batches;
    if (!pk) {
        std::vector<std::size_t> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(batch_size)) {
            const auto e = std::min(order.size(), s + static_cast<std::size_t>(batch_size));
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                                 order.begin() + static_cast<std::ptrdiff_t>(e));
        }
        return batches;
    }

    constexpr std::size_t identities_per_batch = 2;
    const std::size_t per_identity = std::max<std::size_t>(1, static_cast<std::size_t>(batch_size) / identities_per_batch);

    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);

    // Each label's samples are cut into chunks of `per_identity`, padding
    // small labels by resampling with replacement.
    std::map<int, std::vector<std::vector<std::size_t>>> chunks;
    for (auto& [label, members] : by_label) {
        std::shuffle(members.begin(), members.end(), rng);
        std::vector<std::size_t> pool = members;
        while (pool.size() < per_identity) {
            std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
            pool.push_back(members[pick(rng)]);
        }
        auto& out = chunks[label];
        for (std::size_t s = 0; s + per_identity <= pool.size(); s += per_identity) {
            out.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(s),
                             pool.begin() + static_cast<std::ptrdiff_t>(s + per_identity));
        }
    }
    while (true) {
        std::vector<int> available;
        for (const auto& [label, list] : chunks) {
            if (!list.empty()) available.push_back(label);
        }
        if (available.size() < identities_per_batch) break;
        std::shuffle(available.begin(), available.end(), rng);
        std::vector<std::size_t> batch;
        for (std::size_t k = 0; k < identities_per_batch; ++k) {
            auto& list = chunks[available[k]];
            batch.insert(batch.end(), list.back().begin(), list.back().end());
            list.pop_back();
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

template <typename T>
TrainResult<T> train(ModelParams<T> initial, std::span<const TrainingSample<T>> samples, const TrainOptions& options) {
    if (samples.empty()) throw InvalidArgument("train: no annotated tracklets");
    const TrainingSettings& st = options.settings;

    std::vector<int> labels;
    for (const auto& s : samples) labels.push_back(s.label);
    int alpha = options.alpha;
    if (alpha != 0) {
        std::vector<int> distinct = labels;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 2) {
            log::warn("train: alpha = 1 needs at least two annotated identities; falling back to alpha = 0");
            alpha = 0;
        }
    }

    TrainResult<T> result;
    result.alpha = alpha;
    result.params = std::move(initial);
    auto& params = result.params;
    AdamW<T> optimizer(params, st.learning_rate, st.weight_decay);
    ModelParams<T> grads = params.zeros_like();
    std::mt19937_64 rng(options.seed ^ 0x5eed5a3d1e0f2b97ULL);
    const T momentum = static_cast<T>(kBatchNormMomentum);

    for (int epoch = 0; epoch < st.epochs; ++epoch) {
        const auto batches = epoch_batches(labels, st.batch_size, alpha != 0, rng);
        EpochLoss loss{epoch, 0.0, 0.0, 0.0};
        for (const auto& batch : batches) {
            if (options.cancel != nullptr && options.cancel->load()) throw Error("training cancelled");
            std::vector<Mat<T>> inputs;
            std::vector<int> batch_labels;
            for (std::size_t i : batch) {
                inputs.push_back(samples[i].input);
                batch_labels.push_back(samples[i].label);
            }
            BatchStatistics<T> stats;
            const LossValue v = training_loss<T>(params, inputs, batch_labels, alpha, &grads, &stats);
            optimizer.step(params, grads);
            params.running_mean = (T(1) - momentum) * params.running_mean + momentum * stats.mean;
            params.running_var = (T(1) - momentum) * params.running_var + momentum * stats.var_unbiased;
            loss.id += v.id;
            loss.triplet += v.triplet;
            loss.total += v.total;
        }
        if (!batches.empty()) {
            const double n = static_cast<double>(batches.size());
            loss.id /= n;
            loss.triplet /= n;
            loss.total /= n;
        }
        result.curve.push_back(loss);
        if (options.on_epoch) options.on_epoch(loss);
    }
    return result;
}

TrainResult<float> train(std::span<const Tracklet> tracklets, const EmbeddingMatrix& embeddings,
                         std::span<const Annotation> annotations, const ProjectConfig& config,
                         const TrainOptions& options) {
    const auto latest = io::latest_annotations(annotations);
    if (latest.empty()) throw InvalidArgument("train: the annotation set is empty");
    std::unordered_map<TrackletId, const Tracklet*> by_id;
    for (const auto& t : tracklets) by_id.emplace(t.id, &t);

    std::vector<TrainingSample<float>> samples;
    for (const auto& a : latest) {
        auto it = by_id.find(a.tracklet_id);
        if (it == by_id.end()) throw InvalidArgument("annotation refers to unknown tracklet " + std::to_string(a.tracklet_id));
        if (a.identity < 0 || a.identity > config.n_players) {
            throw InvalidArgument("annotation identity " + std::to_string(a.identity) + " outside [0, n_players]");
        }
        samples.push_back({a.tracklet_id, tracklet_input<float>(*it->second, embeddings, config.d_t), a.identity});
    }
    auto initial = init_params<float>(ModelShape::from(config), options.seed);
    return train<float>(std::move(initial), samples, options);
}

std::vector<TrackletOutput> infer_all(std::span<const Tracklet> tracklets, const EmbeddingMatrix& embeddings,
                                      const ModelParams<float>& params) {
    constexpr std::size_t chunk = 32;
    std::vector<TrackletOutput> out;
    out.reserve(tracklets.size());
    for (std::size_t s = 0; s < tracklets.size(); s += chunk) {
        const std::size_t e = std::min(tracklets.size(), s + chunk);
        std::vector<Mat<float>> inputs;
        for (std::size_t i = s; i < e; ++i) {
            inputs.push_back(tracklet_input<float>(tracklets[i], embeddings, params.shape.d_t));
        }
        auto results = forward<float>(params, inputs);
        for (std::size_t i = s; i < e; ++i) {
            out.push_back({tracklets[i].id, results[i - s].scores, results[i - s].features});
        }
    }
    return out;
}

void write_loss_curve_csv(const std::filesystem::path& path, std::span<const EpochLoss> curve) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,loss_id,loss_triplet,total\n";
    out.precision(10);
    for (const auto& e : curve) out << e.epoch << ',' << e.id << ',' << e.triplet << ',' << e.total << '\n';
}

template Mat<float> tracklet_input<float>(const Tracklet&, const EmbeddingMatrix&, int);
template Mat<double> tracklet_input<double>(const Tracklet&, const EmbeddingMatrix&, int);
template class AdamW<float>;
template class AdamW<double>;
template TrainResult<float> train<float>(ModelParams<float>, std::span<const TrainingSample<float>>, const TrainOptions&);
template TrainResult<double> train<double>(ModelParams<double>, std::span<const TrainingSample<double>>,
                                           const TrainOptions&);

}  // namespace playertrack::nn
