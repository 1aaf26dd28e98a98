#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "playertrack/core/types.hpp"
#include "playertrack/reid/tape.hpp"

namespace playertrack::nn {

/// Hyperparameters that determine the parameter tensors' shapes.
struct ModelShape {
    int d1 = 2048;
    int d2 = 128;
    int d_t = 10;
    int n_queries = 32;
    int n_selected_queries = 4;
    int n_classes = 8;
    int encoder_layers = 16;
    int decoder_layers = 1;
    int heads = 16;

    static ModelShape from(const ProjectConfig& config);
    void validate() const;

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

template <typename T>
struct Linear {
    Mat<T> weight;  // in x out
    Mat<T> bias;    // 1 x out
};

template <typename T>
struct Norm {
    Mat<T> gamma;  // 1 x width
    Mat<T> beta;
};

template <typename T>
struct AttentionParams {
    Linear<T> query, key, value, output;
};

template <typename T>
struct EncoderLayer {
    AttentionParams<T> self_attn;
    Norm<T> norm1;
    Linear<T> ff1, ff2;
    Norm<T> norm2;
};

template <typename T>
struct DecoderLayer {
    AttentionParams<T> self_attn;
    Norm<T> norm1;
    AttentionParams<T> cross_attn;
    Norm<T> norm2;
    Linear<T> ff1, ff2;
    Norm<T> norm3;
};

/// Tracklet classifier weights: input projection d1 -> d2, post-norm
/// Transformer encoder over the sampled frames, decoder driven by learned
/// queries (no positional encoding anywhere), batch-norm feature head and a
/// linear classifier.
template <typename T>
struct ModelParams {
    ModelShape shape;
    Linear<T> projection;
    std::vector<EncoderLayer<T>> encoder;
    Mat<T> queries;  // n_queries x d2
    std::vector<DecoderLayer<T>> decoder;
    Norm<T> feature_norm;
    Linear<T> classifier;  // d2 x n_classes

    // Feature-head running statistics; not trained by gradient.
    RowVec<T> running_mean;
    RowVec<T> running_var;

    /// Calls fn(name, tensor) for every trainable tensor in a fixed order.
    template <typename Fn>
    void visit(Fn&& fn);
    template <typename Fn>
    void visit(Fn&& fn) const;

    std::size_t parameter_count() const;

    /// Same shape, every trainable tensor zero; running statistics copied.
    ModelParams zeros_like() const;

    template <typename U>
    ModelParams<U> cast() const;
};

/// Deterministic per seed. Transformer weights and queries: Xavier-uniform;
/// projection and classifier: He-normal; biases 0; norm scales 1; running
/// mean 0 and variance 1.
template <typename T>
ModelParams<T> init_params(const ModelShape& shape, std::uint64_t seed);

/// Correctly shaped tensors, all zero except unit norm scales and running
/// variance.
template <typename T>
ModelParams<T> allocate_params(const ModelShape& shape);

template <typename T>
struct ForwardOutput {
    Mat<T> per_query_logits;    // n_queries x n_classes
    Mat<T> per_query_features;  // n_queries x d2, after the feature head
    RowVec<T> scores;           // S_t: logits of best_query
    RowVec<T> features;         // F_t: features of best_query
    int best_query = 0;
};

/// Inference for a batch of tracklet inputs, each d_t x d1. The feature head
/// uses running statistics, so every output depends only on its own input.
/// Throws Error naming the layer when an activation becomes non-finite.
template <typename T>
std::vector<ForwardOutput<T>> forward(const ModelParams<T>& params, std::span<const Mat<T>> inputs);

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const Mat<T>& input);

/// Query with the highest max-class softmax probability; ties to the lower index.
template <typename T>
int best_query(const Mat<T>& per_query_logits);

/// Encoder output (d_t x d2) for one input; used to check that the model
/// treats the sampled frames as an unordered set.
template <typename T>
Mat<T> encode(const ModelParams<T>& params, const Mat<T>& input);

struct LossValue {
    double id = 0.0;
    double triplet = 0.0;
    double total = 0.0;
    int triplet_anchors = 0;
};

template <typename T>
struct BatchStatistics {
    RowVec<T> mean;
    RowVec<T> var_unbiased;
};

/// Training-mode loss L = L_ID + alpha * L_triplet on one batch, with the
/// feature head normalizing by batch statistics over all queries of all
/// samples. L_ID averages the cross-entropy of each sample's top
/// n_selected_queries queries (ranked by target-class probability); the
/// triplet term uses each sample's top-ranked query feature. When `grads` is
/// non-null it receives dL/dparams.
template <typename T>
LossValue training_loss(const ModelParams<T>& params, std::span<const Mat<T>> inputs, std::span<const int> labels,
                        int alpha, ModelParams<T>* grads, BatchStatistics<T>* stats = nullptr);

// ---------------------------------------------------------------------------

template <typename T>
template <typename Fn>
void ModelParams<T>::visit(Fn&& fn) {
    auto linear = [&](const std::string& name, Linear<T>& l) {
        fn(name + ".weight", l.weight);
        fn(name + ".bias", l.bias);
    };
    auto norm = [&](const std::string& name, Norm<T>& n) {
        fn(name + ".gamma", n.gamma);
        fn(name + ".beta", n.beta);
    };
    auto attention = [&](const std::string& name, AttentionParams<T>& a) {
        linear(name + ".query", a.query);
        linear(name + ".key", a.key);
        linear(name + ".value", a.value);
        linear(name + ".output", a.output);
    };
    linear("projection", projection);
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        const std::string p = "encoder." + std::to_string(i);
        attention(p + ".self_attn", encoder[i].self_attn);
        norm(p + ".norm1", encoder[i].norm1);
        linear(p + ".ff1", encoder[i].ff1);
        linear(p + ".ff2", encoder[i].ff2);
        norm(p + ".norm2", encoder[i].norm2);
    }
    fn(std::string("queries"), queries);
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        const std::string p = "decoder." + std::to_string(i);
        attention(p + ".self_attn", decoder[i].self_attn);
        norm(p + ".norm1", decoder[i].norm1);
        attention(p + ".cross_attn", decoder[i].cross_attn);
        norm(p + ".norm2", decoder[i].norm2);
        linear(p + ".ff1", decoder[i].ff1);
        linear(p + ".ff2", decoder[i].ff2);
        norm(p + ".norm3", decoder[i].norm3);
    }
    norm("feature_norm", feature_norm);
    linear("classifier", classifier);
}

template <typename T>
template <typename Fn>
void ModelParams<T>::visit(Fn&& fn) const {
    const_cast<ModelParams<T>*>(this)->visit(
        [&](const std::string& name, Mat<T>& m) { fn(name, static_cast<const Mat<T>&>(m)); });
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
    ModelParams<T> out = *this;
    out.visit([](const std::string&, Mat<T>& m) { m.setZero(); });
    return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out = allocate_params<U>(shape);
    std::vector<const Mat<T>*> src;
    visit([&](const std::string&, const Mat<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Mat<U>& m) { m = src[i++]->template cast<U>(); });
    out.running_mean = running_mean.template cast<U>();
    out.running_var = running_var.template cast<U>();
    return out;
}

}  // namespace playertrack::nn
