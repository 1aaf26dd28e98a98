#pragma once

// Minimal reverse-mode differentiation over dense matrices. Every op appends a
// node holding its value and a closure that propagates the node's gradient to
// its inputs; `backward` walks the tape in reverse.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "playertrack/core/error.hpp"

namespace playertrack::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
    int id = -1;
};

template <typename T>
class Tape {
public:
    using Matrix = Mat<T>;
    using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

    /// Value that never receives a gradient.
    Var constant(Matrix value) {
        Var v = push(std::move(value), {});
        nodes_.back().requires_grad = false;
        return v;
    }

    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    /// Leaf bound to caller-owned storage, which must outlive the tape.
    Var leaf(const Matrix& value) {
        Node n;
        n.external = &value;
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Var push(Matrix value, Backward backward) {
        Node n;
        n.value = std::move(value);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    const Matrix& value(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.external ? *n.external : n.value;
    }

    /// Gradient accumulator, allocated as zeros on first access.
    Matrix& grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.size() == 0) {
            const Matrix& val = n.external ? *n.external : n.value;
            n.grad = Matrix::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    /// Gradient of a leaf after `backward`; zeros when nothing flowed into it.
    Matrix grad_or_zero(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.size() != 0) return n.grad;
        const Matrix& val = n.external ? *n.external : n.value;
        return Matrix::Zero(val.rows(), val.cols());
    }

    /// Moves the accumulated gradient out of the tape (zeros if none).
    Matrix take_grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.size() != 0) return std::move(n.grad);
        const Matrix& val = n.external ? *n.external : n.value;
        return Matrix::Zero(val.rows(), val.cols());
    }

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and back-propagates.
    void backward(Var out) {
        if (value(out).size() != 1) throw InvalidArgument("backward: output must be 1x1");
        grad(out).setOnes();
        for (int i = out.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        Backward backward;
        bool requires_grad = true;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Dense ops

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
    Mat<T> out;
    out.noalias() = tape.value(a) * tape.value(b);
    return tape.push(std::move(out), [a, b](Tape<T>& t, const Mat<T>& g) {
        if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
        if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
    });
}

/// x * w + b with `b` a 1 x out row broadcast over rows.
template <typename T>
Var affine(Tape<T>& tape, Var x, Var w, Var b) {
    Mat<T> out;
    out.noalias() = tape.value(x) * tape.value(w);
    out.rowwise() += tape.value(b).row(0);
    return tape.push(std::move(out), [x, w, b](Tape<T>& t, const Mat<T>& g) {
        if (t.requires_grad(x)) t.grad(x).noalias() += g * t.value(w).transpose();
        t.grad(w).noalias() += t.value(x).transpose() * g;
        t.grad(b) += g.colwise().sum();
    });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    return tape.push(tape.value(a) + tape.value(b), [a, b](Tape<T>& t, const Mat<T>& g) {
        t.grad(a) += g;
        t.grad(b) += g;
    });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T s) {
    return tape.push(tape.value(a) * s, [a, s](Tape<T>& t, const Mat<T>& g) { t.grad(a) += g * s; });
}

template <typename T>
Var relu(Tape<T>& tape, Var a) {
    return tape.push(tape.value(a).cwiseMax(T(0)), [a](Tape<T>& t, const Mat<T>& g) {
        t.grad(a).array() += (t.value(a).array() > T(0)).select(g.array(), T(0));
    });
}

/// Stacks `count` copies of `a` vertically.
template <typename T>
Var tile_rows(Tape<T>& tape, Var a, int count) {
    const Mat<T>& v = tape.value(a);
    Mat<T> out(v.rows() * count, v.cols());
    for (int c = 0; c < count; ++c) out.middleRows(c * v.rows(), v.rows()) = v;
    return tape.push(std::move(out), [a, count](Tape<T>& t, const Mat<T>& g) {
        const auto r = t.value(a).rows();
        auto& ga = t.grad(a);
        for (int c = 0; c < count; ++c) ga += g.middleRows(c * r, r);
    });
}

template <typename T>
Var gather_rows(Tape<T>& tape, Var a, std::vector<int> rows) {
    const Mat<T>& v = tape.value(a);
    Mat<T> out(static_cast<Eigen::Index>(rows.size()), v.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = v.row(rows[i]);
    return tape.push(std::move(out), [a, rows = std::move(rows)](Tape<T>& t, const Mat<T>& g) {
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

/// Per-row normalization followed by a learned per-column affine map.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Mat<T>& xv = tape.value(x);
    const auto n = xv.cols();
    auto xhat = std::make_shared<Mat<T>>(xv.rows(), n);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xv.rows()));
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const T mean = xv.row(r).mean();
        const T var = (xv.row(r).array() - mean).square().mean();
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = is;
        xhat->row(r) = (xv.row(r).array() - mean) * is;
    }
    Mat<T> out = xhat->array().rowwise() * tape.value(gamma).row(0).array();
    out.rowwise() += tape.value(beta).row(0);
    return tape.push(std::move(out), [x, gamma, beta, xhat, inv_std, n](Tape<T>& t, const Mat<T>& g) {
        t.grad(gamma) += (g.array() * xhat->array()).colwise().sum().matrix();
        t.grad(beta) += g.colwise().sum();
        const Mat<T> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        auto& gx = t.grad(x);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const T m1 = dxhat.row(r).mean();
            const T m2 = (dxhat.row(r).array() * xhat->row(r).array()).mean();
            gx.row(r).array() += (*inv_std)[static_cast<std::size_t>(r)] *
                                 (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
        }
        (void)n;
    });
}

/// Batch normalization with batch statistics (biased variance) over rows,
/// per column. Writes the batch mean and unbiased variance to the outputs.
template <typename T>
Var batch_norm_train(Tape<T>& tape, Var x, Var gamma, Var beta, RowVec<T>& batch_mean, RowVec<T>& batch_var_unbiased,
                     T eps = T(1e-5)) {
    const Mat<T>& xv = tape.value(x);
    const auto rows = xv.rows();
    if (rows < 2) throw InvalidArgument("batch_norm_train: needs at least two rows");
    batch_mean = xv.colwise().mean();
    const Mat<T> centered = xv.rowwise() - batch_mean;
    const RowVec<T> var = centered.array().square().colwise().mean();
    batch_var_unbiased = var * (T(rows) / T(rows - 1));
    const RowVec<T> inv_std = (var.array() + eps).rsqrt();
    auto xhat = std::make_shared<Mat<T>>(centered.array().rowwise() * inv_std.array());
    Mat<T> out = xhat->array().rowwise() * tape.value(gamma).row(0).array();
    out.rowwise() += tape.value(beta).row(0);
    return tape.push(std::move(out), [x, gamma, beta, xhat, inv_std](Tape<T>& t, const Mat<T>& g) {
        t.grad(gamma) += (g.array() * xhat->array()).colwise().sum().matrix();
        t.grad(beta) += g.colwise().sum();
        const Mat<T> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        const RowVec<T> m1 = dxhat.colwise().mean();
        const RowVec<T> m2 = (dxhat.array() * xhat->array()).colwise().mean();
        Mat<T> dx = dxhat;
        dx.rowwise() -= m1;
        dx.array() -= xhat->array().rowwise() * m2.array();
        dx.array().rowwise() *= inv_std.array();
        t.grad(x) += dx;
    });
}

/// Batch normalization with fixed (running) statistics.
template <typename T>
Var batch_norm_eval(Tape<T>& tape, Var x, Var gamma, Var beta, const RowVec<T>& running_mean,
                    const RowVec<T>& running_var, T eps = T(1e-5)) {
    const RowVec<T> inv_std = (running_var.array() + eps).rsqrt();
    auto xhat = std::make_shared<Mat<T>>((tape.value(x).rowwise() - running_mean).array().rowwise() * inv_std.array());
    Mat<T> out = xhat->array().rowwise() * tape.value(gamma).row(0).array();
    out.rowwise() += tape.value(beta).row(0);
    return tape.push(std::move(out), [x, gamma, beta, xhat, inv_std](Tape<T>& t, const Mat<T>& g) {
        t.grad(gamma) += (g.array() * xhat->array()).colwise().sum().matrix();
        t.grad(beta) += g.colwise().sum();
        t.grad(x).array() +=
            (g.array().rowwise() * t.value(gamma).row(0).array()).rowwise() * inv_std.array();
    });
}

/// Scaled dot-product attention core for `heads` heads over `batch`
/// independent sequences. q is (batch*q_len) x D, k and v are (batch*kv_len) x
/// D; sequence b occupies rows [b*len, (b+1)*len). No masking.
template <typename T>
Var multi_head_attention(Tape<T>& tape, Var q, Var k, Var v, int heads, int batch, int q_len, int kv_len) {
    const Mat<T>& qv = tape.value(q);
    const Mat<T>& kv = tape.value(k);
    const Mat<T>& vv = tape.value(v);
    const auto dim = qv.cols();
    if (dim % heads != 0) throw InvalidArgument("multi_head_attention: width not divisible by heads");
    if (qv.rows() != batch * q_len || kv.rows() != batch * kv_len || vv.rows() != batch * kv_len) {
        throw InvalidArgument("multi_head_attention: row count does not match batch layout");
    }
    const int dh = static_cast<int>(dim) / heads;
    const T scale_factor = T(1) / std::sqrt(T(dh));

    auto probs = std::make_shared<std::vector<Mat<T>>>(static_cast<std::size_t>(batch * heads));
    Mat<T> out(qv.rows(), dim);
    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
            const auto qb = qv.block(b * q_len, h * dh, q_len, dh);
            const auto kb = kv.block(b * kv_len, h * dh, kv_len, dh);
            const auto vb = vv.block(b * kv_len, h * dh, kv_len, dh);
            Mat<T> s = (qb * kb.transpose()) * scale_factor;
            for (Eigen::Index r = 0; r < s.rows(); ++r) {
                const T m = s.row(r).maxCoeff();
                s.row(r) = (s.row(r).array() - m).exp();
                s.row(r) /= s.row(r).sum();
            }
            out.block(b * q_len, h * dh, q_len, dh).noalias() = s * vb;
            (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
        }
    }
    return tape.push(std::move(out), [q, k, v, heads, batch, q_len, kv_len, dh, scale_factor, probs](
                                         Tape<T>& t, const Mat<T>& g) {
        const Mat<T>& qv = t.value(q);
        const Mat<T>& kv = t.value(k);
        const Mat<T>& vv = t.value(v);
        auto& gq = t.grad(q);
        auto& gk = t.grad(k);
        auto& gv = t.grad(v);
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                const Mat<T>& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
                const auto go = g.block(b * q_len, h * dh, q_len, dh);
                const auto qb = qv.block(b * q_len, h * dh, q_len, dh);
                const auto kb = kv.block(b * kv_len, h * dh, kv_len, dh);
                const auto vb = vv.block(b * kv_len, h * dh, kv_len, dh);
                gv.block(b * kv_len, h * dh, kv_len, dh).noalias() += p.transpose() * go;
                const Mat<T> dp = go * vb.transpose();
                Mat<T> ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
                ds *= scale_factor;
                gq.block(b * q_len, h * dh, q_len, dh).noalias() += ds * kb;
                gk.block(b * kv_len, h * dh, kv_len, dh).noalias() += ds.transpose() * qb;
            }
        }
    });
}

/// Sum of 1x1 values, each multiplied by its weight.
template <typename T>
Var weighted_sum(Tape<T>& tape, std::vector<Var> terms, std::vector<T> weights) {
    T total = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * tape.value(terms[i])(0, 0);
    Mat<T> out(1, 1);
    out(0, 0) = total;
    return tape.push(std::move(out), [terms = std::move(terms), weights = std::move(weights)](Tape<T>& t,
                                                                                             const Mat<T>& g) {
        for (std::size_t i = 0; i < terms.size(); ++i) t.grad(terms[i])(0, 0) += weights[i] * g(0, 0);
    });
}

}  // namespace playertrack::nn
