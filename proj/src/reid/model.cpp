#include "playertrack/reid/model.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include "playertrack/core/error.hpp"
#include "playertrack/reid/losses.hpp"

namespace playertrack::nn {

ModelShape ModelShape::from(const ProjectConfig& c) {
    ModelShape s;
    s.d1 = c.d1;
    s.d2 = c.d2;
    s.d_t = c.d_t;
    s.n_queries = c.n_queries;
    s.n_selected_queries = c.n_selected_queries;
    s.n_classes = c.n_classes();
    s.encoder_layers = c.encoder_layers;
    s.decoder_layers = c.decoder_layers;
    s.heads = c.heads;
    return s;
}

void ModelShape::validate() const {
    if (d1 < 1 || d2 < 1 || d_t < 1 || n_queries < 1 || n_classes < 2 || heads < 1) {
        throw InvalidArgument("model shape: dimensions must be positive and n_classes >= 2");
    }
    if (d2 % heads != 0) throw InvalidArgument("model shape: d2 must be divisible by heads");
    if (n_selected_queries < 1 || n_selected_queries > n_queries) {
        throw InvalidArgument("model shape: n_selected_queries must be in [1, n_queries]");
    }
    if (encoder_layers < 0 || decoder_layers < 1) {
        throw InvalidArgument("model shape: need >= 0 encoder layers and >= 1 decoder layer");
    }
}

namespace {

template <typename T>
Linear<T> zero_linear(int in, int out) {
    return {Mat<T>::Zero(in, out), Mat<T>::Zero(1, out)};
}

template <typename T>
Norm<T> unit_norm(int width) {
    return {Mat<T>::Ones(1, width), Mat<T>::Zero(1, width)};
}

template <typename T>
AttentionParams<T> zero_attention(int d) {
    return {zero_linear<T>(d, d), zero_linear<T>(d, d), zero_linear<T>(d, d), zero_linear<T>(d, d)};
}

int ff_width(const ModelShape& s) { return 4 * s.d2; }

}  // namespace

template <typename T>
ModelParams<T> allocate_params(const ModelShape& shape) {
    shape.validate();
    const int d = shape.d2;
    ModelParams<T> p;
    p.shape = shape;
    p.projection = zero_linear<T>(shape.d1, d);
    for (int i = 0; i < shape.encoder_layers; ++i) {
        p.encoder.push_back({zero_attention<T>(d), unit_norm<T>(d), zero_linear<T>(d, ff_width(shape)),
                             zero_linear<T>(ff_width(shape), d), unit_norm<T>(d)});
    }
    p.queries = Mat<T>::Zero(shape.n_queries, d);
    for (int i = 0; i < shape.decoder_layers; ++i) {
        p.decoder.push_back({zero_attention<T>(d), unit_norm<T>(d), zero_attention<T>(d), unit_norm<T>(d),
                             zero_linear<T>(d, ff_width(shape)), zero_linear<T>(ff_width(shape), d),
                             unit_norm<T>(d)});
    }
    p.feature_norm = unit_norm<T>(d);
    p.classifier = zero_linear<T>(d, shape.n_classes);
    p.running_mean = RowVec<T>::Zero(d);
    p.running_var = RowVec<T>::Ones(d);
    return p;
}

template <typename T>
ModelParams<T> init_params(const ModelShape& shape, std::uint64_t seed) {
    ModelParams<T> p = allocate_params<T>(shape);
    std::mt19937_64 rng(seed);

    auto xavier = [&rng](Mat<T>& m) {
        const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
    };
    auto he = [&rng](Mat<T>& m) {
        // Weights are stored in x out, so fan-in is the row count.
        std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(m.rows())));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(n(rng));
    };
    auto xavier_attention = [&](AttentionParams<T>& a) {
        xavier(a.query.weight);
        xavier(a.key.weight);
        xavier(a.value.weight);
        xavier(a.output.weight);
    };

    he(p.projection.weight);
    for (auto& layer : p.encoder) {
        xavier_attention(layer.self_attn);
        xavier(layer.ff1.weight);
        xavier(layer.ff2.weight);
    }
    xavier(p.queries);
    for (auto& layer : p.decoder) {
        xavier_attention(layer.self_attn);
        xavier_attention(layer.cross_attn);
        xavier(layer.ff1.weight);
        xavier(layer.ff2.weight);
    }
    he(p.classifier.weight);
    return p;
}

namespace {

template <typename T>
class Binder {
public:
    explicit Binder(Tape<T>& tape) : tape_(tape) {}

    Var operator()(const Mat<T>& m) {
        auto it = vars_.find(&m);
        if (it != vars_.end()) return it->second;
        Var v = tape_.leaf(m);
        vars_.emplace(&m, v);
        return v;
    }

    /// Writes accumulated gradients into `grads`, tensor by tensor.
    void collect(const ModelParams<T>& params, ModelParams<T>& grads) {
        std::vector<Mat<T>*> out;
        grads.visit([&](const std::string&, Mat<T>& m) { out.push_back(&m); });
        std::size_t i = 0;
        params.visit([&](const std::string&, const Mat<T>& m) {
            auto it = vars_.find(&m);
            *out[i] = it == vars_.end() ? Mat<T>::Zero(m.rows(), m.cols()) : tape_.take_grad(it->second);
            ++i;
        });
    }

private:
    Tape<T>& tape_;
    std::unordered_map<const Mat<T>*, Var> vars_;
};

template <typename T>
void check_finite(const Tape<T>& tape, Var v, const std::string& where) {
    if (!tape.value(v).allFinite()) throw Error("non-finite activation in " + where);
}

template <typename T>
Var attention_block(Tape<T>& tape, Binder<T>& bind, const AttentionParams<T>& a, Var query_in, Var memory, int heads,
                    int batch, int q_len, int kv_len) {
    Var q = affine(tape, query_in, bind(a.query.weight), bind(a.query.bias));
    Var k = affine(tape, memory, bind(a.key.weight), bind(a.key.bias));
    Var v = affine(tape, memory, bind(a.value.weight), bind(a.value.bias));
    Var ctx = multi_head_attention(tape, q, k, v, heads, batch, q_len, kv_len);
    return affine(tape, ctx, bind(a.output.weight), bind(a.output.bias));
}

template <typename T>
Var norm_block(Tape<T>& tape, Binder<T>& bind, const Norm<T>& n, Var x) {
    return layer_norm(tape, x, bind(n.gamma), bind(n.beta));
}

template <typename T>
Var feed_forward(Tape<T>& tape, Binder<T>& bind, const Linear<T>& ff1, const Linear<T>& ff2, Var x) {
    Var h = relu(tape, affine(tape, x, bind(ff1.weight), bind(ff1.bias)));
    return affine(tape, h, bind(ff2.weight), bind(ff2.bias));
}

template <typename T>
Mat<T> stack_inputs(const ModelShape& shape, std::span<const Mat<T>> inputs) {
    Mat<T> x(static_cast<Eigen::Index>(inputs.size()) * shape.d_t, shape.d1);
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        if (inputs[b].rows() != shape.d_t || inputs[b].cols() != shape.d1) {
            throw InvalidArgument("model input must be " + std::to_string(shape.d_t) + "x" +
                                  std::to_string(shape.d1) + ", got " + std::to_string(inputs[b].rows()) + "x" +
                                  std::to_string(inputs[b].cols()));
        }
        x.middleRows(static_cast<Eigen::Index>(b) * shape.d_t, shape.d_t) = inputs[b];
    }
    return x;
}

template <typename T>
Var encoder_graph(Tape<T>& tape, Binder<T>& bind, const ModelParams<T>& p, Var x, int batch) {
    const ModelShape& s = p.shape;
    Var h = affine(tape, x, bind(p.projection.weight), bind(p.projection.bias));
    check_finite(tape, h, "projection");
    for (std::size_t i = 0; i < p.encoder.size(); ++i) {
        const auto& layer = p.encoder[i];
        Var attn = attention_block(tape, bind, layer.self_attn, h, h, s.heads, batch, s.d_t, s.d_t);
        h = norm_block(tape, bind, layer.norm1, add(tape, h, attn));
        Var ff = feed_forward(tape, bind, layer.ff1, layer.ff2, h);
        h = norm_block(tape, bind, layer.norm2, add(tape, h, ff));
        check_finite(tape, h, "encoder layer " + std::to_string(i));
    }
    return h;
}

template <typename T>
Var decoder_graph(Tape<T>& tape, Binder<T>& bind, const ModelParams<T>& p, Var memory, int batch) {
    const ModelShape& s = p.shape;
    Var h = tile_rows(tape, bind(p.queries), batch);
    for (std::size_t i = 0; i < p.decoder.size(); ++i) {
        const auto& layer = p.decoder[i];
        Var self = attention_block(tape, bind, layer.self_attn, h, h, s.heads, batch, s.n_queries, s.n_queries);
        h = norm_block(tape, bind, layer.norm1, add(tape, h, self));
        Var cross = attention_block(tape, bind, layer.cross_attn, h, memory, s.heads, batch, s.n_queries, s.d_t);
        h = norm_block(tape, bind, layer.norm2, add(tape, h, cross));
        Var ff = feed_forward(tape, bind, layer.ff1, layer.ff2, h);
        h = norm_block(tape, bind, layer.norm3, add(tape, h, ff));
        check_finite(tape, h, "decoder layer " + std::to_string(i));
    }
    return h;
}

}  // namespace

template <typename T>
int best_query(const Mat<T>& per_query_logits) {
    const Mat<T> p = softmax_rows(per_query_logits);
    int best = 0;
    T best_p = -1;
    for (Eigen::Index q = 0; q < p.rows(); ++q) {
        const T m = p.row(q).maxCoeff();
        if (m > best_p) {
            best_p = m;
            best = static_cast<int>(q);
        }
    }
    return best;
}

template <typename T>
std::vector<ForwardOutput<T>> forward(const ModelParams<T>& params, std::span<const Mat<T>> inputs) {
    const ModelShape& s = params.shape;
    if (inputs.empty()) return {};
    const int batch = static_cast<int>(inputs.size());
    Tape<T> tape;
    Binder<T> bind(tape);
    Var x = tape.constant(stack_inputs(s, inputs));
    Var memory = encoder_graph(tape, bind, params, x, batch);
    Var dec = decoder_graph(tape, bind, params, memory, batch);
    Var feats = batch_norm_eval(tape, dec, bind(params.feature_norm.gamma), bind(params.feature_norm.beta),
                                params.running_mean, params.running_var);
    Var logits = affine(tape, feats, bind(params.classifier.weight), bind(params.classifier.bias));
    check_finite(tape, logits, "feature head");

    std::vector<ForwardOutput<T>> out(inputs.size());
    for (int b = 0; b < batch; ++b) {
        auto& o = out[static_cast<std::size_t>(b)];
        o.per_query_logits = tape.value(logits).middleRows(b * s.n_queries, s.n_queries);
        o.per_query_features = tape.value(feats).middleRows(b * s.n_queries, s.n_queries);
        o.best_query = best_query(o.per_query_logits);
        o.scores = o.per_query_logits.row(o.best_query);
        o.features = o.per_query_features.row(o.best_query);
    }
    return out;
}

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const Mat<T>& input) {
    return std::move(forward(params, std::span<const Mat<T>>(&input, 1)).front());
}

template <typename T>
Mat<T> encode(const ModelParams<T>& params, const Mat<T>& input) {
    Tape<T> tape;
    Binder<T> bind(tape);
    Var x = tape.constant(stack_inputs(params.shape, std::span<const Mat<T>>(&input, 1)));
    return tape.value(encoder_graph(tape, bind, params, x, 1));
}

template <typename T>
LossValue training_loss(const ModelParams<T>& params, std::span<const Mat<T>> inputs, std::span<const int> labels,
                        int alpha, ModelParams<T>* grads, BatchStatistics<T>* stats) {
    const ModelShape& s = params.shape;
    if (inputs.empty() || inputs.size() != labels.size()) {
        throw InvalidArgument("training_loss: need one label per input and a non-empty batch");
    }
    for (int label : labels) {
        if (label < 0 || label >= s.n_classes) throw InvalidArgument("training_loss: label out of range");
    }
    const int batch = static_cast<int>(inputs.size());
    Tape<T> tape;
    Binder<T> bind(tape);
    Var x = tape.constant(stack_inputs(s, inputs));
    Var memory = encoder_graph(tape, bind, params, x, batch);
    Var dec = decoder_graph(tape, bind, params, memory, batch);
    BatchStatistics<T> local;
    Var feats = batch_norm_train(tape, dec, bind(params.feature_norm.gamma), bind(params.feature_norm.beta),
                                 local.mean, local.var_unbiased);
    Var logits = affine(tape, feats, bind(params.classifier.weight), bind(params.classifier.bias));
    check_finite(tape, logits, "feature head");

    std::vector<RowTarget> ce_items;
    std::vector<int> anchor_rows;
    for (int b = 0; b < batch; ++b) {
        const Mat<T> sample_logits = tape.value(logits).middleRows(b * s.n_queries, s.n_queries);
        const auto selected = select_queries(sample_logits, labels[static_cast<std::size_t>(b)], s.n_selected_queries);
        for (int q : selected) ce_items.push_back({b * s.n_queries + q, labels[static_cast<std::size_t>(b)]});
        anchor_rows.push_back(b * s.n_queries + selected.front());
    }
    // Every sample contributes the same number of rows, so the global mean
    // equals the mean over samples of the per-sample mean.
    Var id = cross_entropy(tape, logits, std::move(ce_items));

    LossValue value;
    value.id = static_cast<double>(tape.value(id)(0, 0));
    Var total = id;
    if (alpha != 0) {
        Var anchors = gather_rows(tape, feats, anchor_rows);
        std::vector<int> label_vec(labels.begin(), labels.end());
        value.triplet_anchors = static_cast<int>(
            mine_batch_hard(pairwise_distances(tape.value(anchors)), std::span<const int>(label_vec)).size());
        Var tri = triplet_batch_hard(tape, anchors, std::move(label_vec));
        value.triplet = static_cast<double>(tape.value(tri)(0, 0));
        total = weighted_sum<T>(tape, {id, tri}, {T(1), static_cast<T>(alpha)});
    }
    value.total = static_cast<double>(tape.value(total)(0, 0));

    if (grads != nullptr) {
        tape.backward(total);
        if (grads->shape != s || grads->projection.weight.size() == 0) *grads = params.zeros_like();
        bind.collect(params, *grads);
    }
    if (stats != nullptr) *stats = std::move(local);
    return value;
}

#define PLAYERTRACK_INSTANTIATE(T)                                                                             \
    template ModelParams<T> allocate_params<T>(const ModelShape&);                                             \
    template ModelParams<T> init_params<T>(const ModelShape&, std::uint64_t);                                  \
    template std::vector<ForwardOutput<T>> forward<T>(const ModelParams<T>&, std::span<const Mat<T>>);         \
    template ForwardOutput<T> forward<T>(const ModelParams<T>&, const Mat<T>&);                                \
    template int best_query<T>(const Mat<T>&);                                                                 \
    template Mat<T> encode<T>(const ModelParams<T>&, const Mat<T>&);                                           \
    template LossValue training_loss<T>(const ModelParams<T>&, std::span<const Mat<T>>, std::span<const int>, \
                                        int, ModelParams<T>*, BatchStatistics<T>*);

PLAYERTRACK_INSTANTIATE(float)
PLAYERTRACK_INSTANTIATE(double)

#undef PLAYERTRACK_INSTANTIATE

}  // namespace playertrack::nn
