#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "playertrack/reid/tape.hpp"

namespace playertrack::nn {

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
    Mat<T> p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const T m = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

/// log(1 + e^x) without overflow.
template <typename T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// The `count` queries with the largest softmax probability of
/// `target_class`, in descending order; ties go to the lower index.
template <typename T>
std::vector<int> select_queries(const Mat<T>& per_query_logits, int target_class, int count) {
    const Mat<T> p = softmax_rows(per_query_logits);
    std::vector<int> idx(static_cast<std::size_t>(p.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return p(a, target_class) > p(b, target_class); });
    idx.resize(static_cast<std::size_t>(std::min<Eigen::Index>(count, p.rows())));
    return idx;
}

/// Mean softmax cross-entropy of every row against `target`.
template <typename T>
T id_loss(const Mat<T>& logits, int target) {
    T total = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const T m = logits.row(r).maxCoeff();
        const T lse = m + std::log((logits.row(r).array() - m).exp().sum());
        total += lse - logits(r, target);
    }
    return total / T(logits.rows());
}

template <typename T>
Mat<T> pairwise_distances(const Mat<T>& features) {
    const auto n = features.rows();
    Mat<T> d = Mat<T>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            d(i, j) = d(j, i) = (features.row(i) - features.row(j)).norm();
        }
    }
    return d;
}

struct HardTriplet {
    int anchor;
    int positive;  // farthest same-label sample
    int negative;  // nearest different-label sample
};

/// Batch-hard mining; anchors lacking a positive or a negative are skipped.
/// Ties resolve to the lowest index.
template <typename T>
std::vector<HardTriplet> mine_batch_hard(const Mat<T>& distances, std::span<const int> labels) {
    std::vector<HardTriplet> out;
    const int n = static_cast<int>(labels.size());
    for (int a = 0; a < n; ++a) {
        int pos = -1;
        int neg = -1;
        for (int j = 0; j < n; ++j) {
            if (j == a) continue;
            if (labels[j] == labels[a]) {
                if (pos < 0 || distances(a, j) > distances(a, pos)) pos = j;
            } else if (neg < 0 || distances(a, j) < distances(a, neg)) {
                neg = j;
            }
        }
        if (pos >= 0 && neg >= 0) out.push_back({a, pos, neg});
    }
    return out;
}

/// Soft-margin batch-hard triplet loss: mean over valid anchors of
/// softplus(d(a, hardest positive) - d(a, hardest negative)). Returns 0 when
/// no anchor has both a positive and a negative.
template <typename T>
T triplet_loss_batch_hard(const Mat<T>& features, std::span<const int> labels) {
    const Mat<T> d = pairwise_distances(features);
    const auto triplets = mine_batch_hard(d, labels);
    if (triplets.empty()) return T(0);
    T total = 0;
    for (const auto& tr : triplets) total += softplus(d(tr.anchor, tr.positive) - d(tr.anchor, tr.negative));
    return total / T(triplets.size());
}

// ---------------------------------------------------------------------------
// Differentiable versions

struct RowTarget {
    int row;
    int target;
};

/// Mean cross-entropy over the listed (row, target) pairs of `logits`.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::vector<RowTarget> items) {
    const Mat<T>& lv = tape.value(logits);
    auto probs = std::make_shared<Mat<T>>(static_cast<Eigen::Index>(items.size()), lv.cols());
    T total = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto row = lv.row(items[i].row);
        const T m = row.maxCoeff();
        const T lse = m + std::log((row.array() - m).exp().sum());
        total += lse - row(items[i].target);
        probs->row(static_cast<Eigen::Index>(i)) = (row.array() - lse).exp();
    }
    Mat<T> out(1, 1);
    out(0, 0) = items.empty() ? T(0) : total / T(items.size());
    return tape.push(std::move(out), [logits, items = std::move(items), probs](Tape<T>& t, const Mat<T>& g) {
        if (items.empty()) return;
        auto& gl = t.grad(logits);
        const T w = g(0, 0) / T(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto grow = gl.row(items[i].row);
            grow += w * probs->row(static_cast<Eigen::Index>(i));
            grow(items[i].target) -= w;
        }
    });
}

/// Differentiable soft-margin batch-hard triplet loss over the rows of
/// `features`. The distance floor keeps the gradient finite for coincident
/// points.
template <typename T>
Var triplet_batch_hard(Tape<T>& tape, Var features, std::vector<int> labels) {
    const Mat<T>& f = tape.value(features);
    const Mat<T> d = pairwise_distances(f);
    auto triplets = std::make_shared<std::vector<HardTriplet>>(mine_batch_hard(d, std::span<const int>(labels)));
    T total = 0;
    for (const auto& tr : *triplets) total += softplus(d(tr.anchor, tr.positive) - d(tr.anchor, tr.negative));
    Mat<T> out(1, 1);
    out(0, 0) = triplets->empty() ? T(0) : total / T(triplets->size());
    return tape.push(std::move(out), [features, triplets, d](Tape<T>& t, const Mat<T>& g) {
        if (triplets->empty()) return;
        const Mat<T>& f = t.value(features);
        auto& gf = t.grad(features);
        const T w = g(0, 0) / T(triplets->size());
        const T floor = T(1e-12);
        for (const auto& tr : *triplets) {
            const T s = sigmoid(d(tr.anchor, tr.positive) - d(tr.anchor, tr.negative)) * w;
            const T dp = std::max(d(tr.anchor, tr.positive), floor);
            const T dn = std::max(d(tr.anchor, tr.negative), floor);
            const RowVec<T> up = (f.row(tr.anchor) - f.row(tr.positive)) / dp;
            const RowVec<T> un = (f.row(tr.anchor) - f.row(tr.negative)) / dn;
            gf.row(tr.anchor) += s * (up - un);
            gf.row(tr.positive) -= s * up;
            gf.row(tr.negative) += s * un;
        }
    });
}

}  // namespace playertrack::nn
