#pragma once

/// @file autodiff.hpp
/// @brief Minimal define-by-run reverse-mode differentiation.
///
/// Tensors are row-major and treated as 2-D by every op: `rows()` is the product
/// of all leading dimensions and `cols()` the last one. Node features live in
/// [batch * n, h] tensors, edge features in [batch * n * n, h] tensors, with
/// edge row (b, i, j) at index (b * n + i) * n + j.
///
/// A Tape records one backward closure per op. `Tape::backward` runs them in
/// reverse recording order exactly once; gradients accumulate into every
/// reachable tensor created with `requires_grad`.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace gcntsp::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until something flows into it
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = shape_numel(shape);
        return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor " + shape_string(shape) + " given " +
                             std::to_string(values.size()) + " values");
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t numel() const noexcept { return node_->value.size(); }
    std::size_t cols() const noexcept { return node_->shape.empty() ? 1 : node_->shape.back(); }
    std::size_t rows() const noexcept { return cols() ? numel() / cols() : 0; }

    std::span<T> values() noexcept { return node_->value; }
    std::span<const T> values() const noexcept { return node_->value; }
    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor " + shape_string(shape()));
        return node_->value[0];
    }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool has_grad() const noexcept { return node_->grad.size() == node_->value.size() && numel() > 0; }
    std::span<const T> grad() const noexcept { return node_->grad; }
    std::span<T> grad() noexcept { return node_->grad; }
    void clear_grad() noexcept { node_->grad.clear(); }

    /// Same values, cut from the graph.
    Tensor detach() const { return from(shape(), node_->value, false); }

    Node<T>* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

  private:
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
    template <typename>
    friend class Tape;

    std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
  public:
    /// A non-recording tape evaluates ops without keeping anything for backward.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Output tensor of an op; it requires grad when any input does.
    Tensor<T> make(Shape shape, std::vector<T> values, std::initializer_list<const Tensor<T>*> inputs) {
        bool rg = false;
        for (const auto* in : inputs) rg = rg || in->requires_grad();
        return Tensor<T>::from(std::move(shape), std::move(values), rg);
    }

    /// Registers the backward closure of `out`; skipped when no gradient can flow.
    void on_backward(const Tensor<T>& out, std::function<void(const std::vector<T>& grad_out)> fn) {
        if (!record_ || !out.requires_grad()) return;
        entries_.push_back({out.shared(), std::move(fn)});
    }

    std::size_t size() const noexcept { return entries_.size(); }

    /// When set, every relu appends the sign pattern of its input, in op order.
    /// Gradient checks use it to spot perturbations that cross a kink.
    void set_activation_trace(std::vector<std::vector<bool>>* trace) noexcept { trace_ = trace; }
    std::vector<std::vector<bool>>* activation_trace() const noexcept { return trace_; }

    void backward(const Tensor<T>& loss) {
        if (!record_) throw StateError("backward on a non-recording tape");
        if (consumed_) throw StateError("backward called twice on the same tape; re-run forward first");
        if (loss.numel() != 1)
            throw InvalidArgument("backward needs a scalar loss, got " + shape_string(loss.shape()));
        if (!loss.requires_grad()) throw StateError("loss does not depend on any trainable tensor");
        consumed_ = true;
        loss.node()->ensure_grad();
        loss.node()->grad[0] += T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->out->grad.empty()) continue;
            it->fn(it->out->grad);
        }
        entries_.clear();
    }

  private:
    struct Entry {
        std::shared_ptr<Node<T>> out;
        std::function<void(const std::vector<T>&)> fn;
    };
    std::vector<Entry> entries_;
    bool record_ = true;
    bool consumed_ = false;
    std::vector<std::vector<bool>>* trace_ = nullptr;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
std::vector<T>& grad_of(const Tensor<T>& t) {
    t.node()->ensure_grad();
    return t.node()->grad;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": lhs " + shape_string(a.shape()) + " vs rhs " +
                         shape_string(b.shape()));
}

} // namespace detail

/// y = x W^T (+ b). x: [.., in], W: [out, in], b: [out].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr) {
    using namespace detail;
    if (w.shape().size() != 2 || w.shape()[1] != x.cols())
        throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                         shape_string(w.shape()));
    const std::size_t r = x.rows(), k = x.cols(), o = w.shape()[0];
    if (b && b->numel() != o)
        throw ShapeError("linear: bias " + shape_string(b->shape()) + " vs weight " +
                         shape_string(w.shape()));
    std::vector<T> y(r * o);
    Map<T> Y(y.data(), r, o);
    Y.noalias() = MapC<T>(x.values().data(), r, k) * MapC<T>(w.values().data(), o, k).transpose();
    if (b) Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b->values().data(), o);

    Shape shape = x.shape();
    shape.back() = o;
    Tensor<T> out = b ? tape.make(std::move(shape), std::move(y), {&x, &w, b})
                      : tape.make(std::move(shape), std::move(y), {&x, &w});
    Tensor<T> bias = b ? *b : Tensor<T>{};
    tape.on_backward(out, [x, w, bias, r, k, o](const std::vector<T>& g) {
        MapC<T> G(g.data(), r, o);
        if (x.requires_grad())
            Map<T>(grad_of(x).data(), r, k).noalias() += G * MapC<T>(w.values().data(), o, k);
        if (w.requires_grad())
            Map<T>(grad_of(w).data(), o, k).noalias() += G.transpose() * MapC<T>(x.values().data(), r, k);
        if (bias.defined() && bias.requires_grad())
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_of(bias).data(), o) += G.colwise().sum();
    });
    return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a, b);
    std::vector<T> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
    Tensor<T> out = tape.make(a.shape(), std::move(y), {&a, &b});
    tape.on_backward(out, [a, b](const std::vector<T>& g) {
        for (const Tensor<T>* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto& dg = detail::grad_of(*t);
            for (std::size_t i = 0; i < g.size(); ++i) dg[i] += g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<T> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
    Tensor<T> out = tape.make(a.shape(), std::move(y), {&a, &b});
    tape.on_backward(out, [a, b](const std::vector<T>& g) {
        if (a.requires_grad()) {
            auto& da = detail::grad_of(a);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b.values()[i];
        }
        if (b.requires_grad()) {
            auto& db = detail::grad_of(b);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a.values()[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    std::vector<T> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
    if (auto* trace = tape.activation_trace()) {
        auto& signs = trace->emplace_back(x.numel());
        for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = x.values()[i] > T(0);
    }
    Tensor<T> out = tape.make(x.shape(), std::move(y), {&x});
    tape.on_backward(out, [x](const std::vector<T>& g) {
        auto& dx = detail::grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.values()[i] > T(0)) dx[i] += g[i];
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
    std::vector<T> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x.values()[i]));
    Tensor<T> out = tape.make(x.shape(), std::move(y), {&x});
    std::weak_ptr<Node<T>> self = out.shared();
    tape.on_backward(out, [x, self](const std::vector<T>& g) {
        const auto& s = self.lock()->value;
        auto& dx = detail::grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * s[i] * (T(1) - s[i]);
    });
    return out;
}

/// Concatenation along the last dimension.
template <typename T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows())
        throw ShapeError("concat: lhs " + shape_string(a.shape()) + " vs rhs " + shape_string(b.shape()));
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<T> y(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(a.values().data() + i * ca, ca, y.data() + i * (ca + cb));
        std::copy_n(b.values().data() + i * cb, cb, y.data() + i * (ca + cb) + ca);
    }
    Shape shape = a.shape();
    shape.back() = ca + cb;
    Tensor<T> out = tape.make(std::move(shape), std::move(y), {&a, &b});
    tape.on_backward(out, [a, b, r, ca, cb](const std::vector<T>& g) {
        if (a.requires_grad()) {
            auto& da = detail::grad_of(a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t c = 0; c < ca; ++c) da[i * ca + c] += g[i * (ca + cb) + c];
        }
        if (b.requires_grad()) {
            auto& db = detail::grad_of(b);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t c = 0; c < cb; ++c) db[i * cb + c] += g[i * (ca + cb) + ca + c];
        }
    });
    return out;
}

/// out[r] = x[index[r]] row-wise; the backward pass scatter-adds.
template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::shared_ptr<const std::vector<std::uint32_t>> index) {
    const std::size_t c = x.cols(), rows_in = x.rows();
    std::vector<T> y(index->size() * c);
    for (std::size_t r = 0; r < index->size(); ++r) {
        const std::size_t src = (*index)[r];
        if (src >= rows_in)
            throw ShapeError("gather_rows: index " + std::to_string(src) + " out of range for " +
                             shape_string(x.shape()));
        std::copy_n(x.values().data() + src * c, c, y.data() + r * c);
    }
    Tensor<T> out = tape.make({index->size(), c}, std::move(y), {&x});
    tape.on_backward(out, [x, index, c](const std::vector<T>& g) {
        auto& dx = detail::grad_of(x);
        for (std::size_t r = 0; r < index->size(); ++r) {
            T* dst = dx.data() + (*index)[r] * c;
            const T* src = g.data() + r * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
        }
    });
    return out;
}

/// Edge gates. For edge rows (b, i, j) and every channel:
///   out_ij = s_ij / (sum_{j' != i} s_ij' + eps),   out_ii = 0.
template <typename T>
Tensor<T> gate_normalize(Tape<T>& tape, const Tensor<T>& s, std::size_t n, T eps) {
    const std::size_t c = s.cols();
    if (n == 0 || s.rows() % (n * n) != 0)
        throw ShapeError("gate_normalize: " + shape_string(s.shape()) + " is not a stack of " +
                         std::to_string(n) + "x" + std::to_string(n) + " edge blocks");
    const std::size_t groups = s.rows() / n; // one group per (b, i)
    std::vector<T> y(s.numel(), T(0));
    std::vector<T> denom(groups * c, eps);
    const T* sv = s.values().data();
    for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t i = gi % n;
        T* d = denom.data() + gi * c;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const T* row = sv + (gi * n + j) * c;
            for (std::size_t k = 0; k < c; ++k) d[k] += row[k];
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const T* row = sv + (gi * n + j) * c;
            T* out = y.data() + (gi * n + j) * c;
            for (std::size_t k = 0; k < c; ++k) out[k] = row[k] / d[k];
        }
    }
    Tensor<T> out = tape.make(s.shape(), std::move(y), {&s});
    tape.on_backward(out, [s, n, c, groups, denom = std::move(denom)](const std::vector<T>& g) {
        auto& ds = detail::grad_of(s);
        const T* sv = s.values().data();
        std::vector<T> dot(c);
        for (std::size_t gi = 0; gi < groups; ++gi) {
            const std::size_t i = gi % n;
            const T* d = denom.data() + gi * c;
            std::fill(dot.begin(), dot.end(), T(0));
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const std::size_t base = (gi * n + j) * c;
                for (std::size_t k = 0; k < c; ++k) dot[k] += g[base + k] * sv[base + k];
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const std::size_t base = (gi * n + j) * c;
                for (std::size_t k = 0; k < c; ++k)
                    ds[base + k] += g[base + k] / d[k] - dot[k] / (d[k] * d[k]);
            }
        }
    });
    return out;
}

/// agg[(b,i)] = sum_j gate[(b,i,j)] * v[(b,j)], channel-wise.
template <typename T>
Tensor<T> neighbor_sum(Tape<T>& tape, const Tensor<T>& gate, const Tensor<T>& v, std::size_t n) {
    const std::size_t c = v.cols();
    if (gate.cols() != c || gate.rows() != v.rows() * n || v.rows() % n != 0)
        throw ShapeError("neighbor_sum: gates " + shape_string(gate.shape()) + " vs nodes " +
                         shape_string(v.shape()) + " with n=" + std::to_string(n));
    const std::size_t node_rows = v.rows();
    std::vector<T> y(node_rows * c, T(0));
    const T* gv = gate.values().data();
    const T* vv = v.values().data();
    for (std::size_t gi = 0; gi < node_rows; ++gi) {
        const std::size_t batch_base = (gi / n) * n;
        T* out = y.data() + gi * c;
        for (std::size_t j = 0; j < n; ++j) {
            const T* e = gv + (gi * n + j) * c;
            const T* x = vv + (batch_base + j) * c;
            for (std::size_t k = 0; k < c; ++k) out[k] += e[k] * x[k];
        }
    }
    Tensor<T> out = tape.make(v.shape(), std::move(y), {&gate, &v});
    tape.on_backward(out, [gate, v, n, c, node_rows](const std::vector<T>& g) {
        const T* gv = gate.values().data();
        const T* vv = v.values().data();
        T* dgate = gate.requires_grad() ? detail::grad_of(gate).data() : nullptr;
        T* dv = v.requires_grad() ? detail::grad_of(v).data() : nullptr;
        for (std::size_t gi = 0; gi < node_rows; ++gi) {
            const std::size_t batch_base = (gi / n) * n;
            const T* go = g.data() + gi * c;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t erow = (gi * n + j) * c;
                const std::size_t vrow = (batch_base + j) * c;
                if (dgate)
                    for (std::size_t k = 0; k < c; ++k) dgate[erow + k] += go[k] * vv[vrow + k];
                if (dv)
                    for (std::size_t k = 0; k < c; ++k) dv[vrow + k] += go[k] * gv[erow + k];
            }
        }
    });
    return out;
}

/// Running statistics of one batch-norm site.
template <typename T>
struct BatchNormStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;

    explicit BatchNormStats(std::size_t channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

struct BatchNormOptions {
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalization over all rows. In training mode the batch statistics
/// are used (biased variance) and the running estimates updated with the
/// unbiased variance; in evaluation mode the running estimates are used.
template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, bool training, BatchNormOptions opt = {}) {
    const std::size_t r = x.rows(), c = x.cols();
    if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c)
        throw ShapeError("batch_norm: input " + shape_string(x.shape()) + " vs gamma " +
                         shape_string(gamma.shape()) + " / beta " + shape_string(beta.shape()));
    const T eps = static_cast<T>(opt.eps);
    std::vector<T> mean(c, T(0)), invstd(c);
    const T* xv = x.values().data();
    if (training) {
        if (r < 2) throw ShapeError("batch_norm: training mode needs at least 2 rows");
        std::vector<T> var(c, T(0));
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < c; ++k) mean[k] += xv[i * c + k];
        for (auto& m : mean) m /= static_cast<T>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < c; ++k) {
                const T dlt = xv[i * c + k] - mean[k];
                var[k] += dlt * dlt;
            }
        const T mom = static_cast<T>(opt.momentum);
        for (std::size_t k = 0; k < c; ++k) {
            var[k] /= static_cast<T>(r);
            invstd[k] = T(1) / std::sqrt(var[k] + eps);
            stats.running_mean[k] = (T(1) - mom) * stats.running_mean[k] + mom * mean[k];
            stats.running_var[k] = (T(1) - mom) * stats.running_var[k] +
                                   mom * var[k] * static_cast<T>(r) / static_cast<T>(r - 1);
        }
    } else {
        for (std::size_t k = 0; k < c; ++k) {
            mean[k] = stats.running_mean[k];
            invstd[k] = T(1) / std::sqrt(stats.running_var[k] + eps);
        }
    }
    std::vector<T> xhat(r * c), y(r * c);
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t idx = i * c + k;
            xhat[idx] = (xv[idx] - mean[k]) * invstd[k];
            y[idx] = gv[k] * xhat[idx] + bv[k];
        }
    Tensor<T> out = tape.make(x.shape(), std::move(y), {&x, &gamma, &beta});
    tape.on_backward(out, [x, gamma, beta, r, c, training, invstd = std::move(invstd),
                           xhat = std::move(xhat)](const std::vector<T>& g) {
        std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < c; ++k) {
                sum_g[k] += g[i * c + k];
                sum_gx[k] += g[i * c + k] * xhat[i * c + k];
            }
        if (gamma.requires_grad()) {
            auto& dg = detail::grad_of(gamma);
            for (std::size_t k = 0; k < c; ++k) dg[k] += sum_gx[k];
        }
        if (beta.requires_grad()) {
            auto& db = detail::grad_of(beta);
            for (std::size_t k = 0; k < c; ++k) db[k] += sum_g[k];
        }
        if (!x.requires_grad()) return;
        auto& dx = detail::grad_of(x);
        const T* gv = gamma.values().data();
        const T m = static_cast<T>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < c; ++k) {
                const std::size_t idx = i * c + k;
                if (training)
                    dx[idx] += gv[k] * invstd[k] * (g[idx] - sum_g[k] / m - xhat[idx] * sum_gx[k] / m);
                else
                    dx[idx] += gv[k] * invstd[k] * g[idx];
            }
    });
    return out;
}

/// Row-wise softmax over the last dimension.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x) {
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<T> y(x.numel());
    const T* xv = x.values().data();
    for (std::size_t i = 0; i < r; ++i) {
        const T mx = *std::max_element(xv + i * c, xv + (i + 1) * c);
        T z = T(0);
        for (std::size_t k = 0; k < c; ++k) z += (y[i * c + k] = std::exp(xv[i * c + k] - mx));
        for (std::size_t k = 0; k < c; ++k) y[i * c + k] /= z;
    }
    Tensor<T> out = tape.make(x.shape(), std::move(y), {&x});
    std::weak_ptr<Node<T>> self = out.shared();
    tape.on_backward(out, [x, self, r, c](const std::vector<T>& g) {
        const auto& p = self.lock()->value;
        auto& dx = detail::grad_of(x);
        for (std::size_t i = 0; i < r; ++i) {
            T dot = T(0);
            for (std::size_t k = 0; k < c; ++k) dot += g[i * c + k] * p[i * c + k];
            for (std::size_t k = 0; k < c; ++k) dx[i * c + k] += p[i * c + k] * (g[i * c + k] - dot);
        }
    });
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.values()) total += v;
    Tensor<T> out = tape.make({1}, {total}, {&x});
    tape.on_backward(out, [x](const std::vector<T>& g) {
        auto& dx = detail::grad_of(x);
        for (auto& d : dx) d += g[0];
    });
    return out;
}

/// Mean over rows with label >= 0 of  weight[label] * -log softmax(logits)[label].
/// Rows labelled -1 are masked out.
template <typename T>
Tensor<T> weighted_cross_entropy(Tape<T>& tape, const Tensor<T>& logits,
                                 std::shared_ptr<const std::vector<int>> labels, std::vector<T> class_weight) {
    const std::size_t r = logits.rows(), c = logits.cols();
    if (labels->size() != r || class_weight.size() != c)
        throw ShapeError("weighted_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels->size()) + " labels / " +
                         std::to_string(class_weight.size()) + " class weights");
    std::vector<T> prob(r * c);
    const T* lv = logits.values().data();
    T total = T(0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < r; ++i) {
        const T mx = *std::max_element(lv + i * c, lv + (i + 1) * c);
        T z = T(0);
        for (std::size_t k = 0; k < c; ++k) z += (prob[i * c + k] = std::exp(lv[i * c + k] - mx));
        for (std::size_t k = 0; k < c; ++k) prob[i * c + k] /= z;
        const int y = (*labels)[i];
        if (y < 0) continue;
        if (static_cast<std::size_t>(y) >= c) throw ShapeError("weighted_cross_entropy: label out of range");
        total += class_weight[y] * (std::log(z) + mx - lv[i * c + y]);
        ++count;
    }
    if (count == 0) throw InvalidArgument("weighted_cross_entropy: every row is masked");
    Tensor<T> out = tape.make({1}, {total / static_cast<T>(count)}, {&logits});
    tape.on_backward(out, [logits, labels, r, c, count, prob = std::move(prob),
                           w = std::move(class_weight)](const std::vector<T>& g) {
        auto& dl = detail::grad_of(logits);
        const T scale = g[0] / static_cast<T>(count);
        for (std::size_t i = 0; i < r; ++i) {
            const int y = (*labels)[i];
            if (y < 0) continue;
            for (std::size_t k = 0; k < c; ++k)
                dl[i * c + k] += scale * w[y] * (prob[i * c + k] - (static_cast<int>(k) == y ? T(1) : T(0)));
        }
    });
    return out;
}

/// Named trainable tensors plus named non-trainable buffers, in insertion order,
/// with Adam moment estimates per parameter.
template <typename T>
class ParamStore {
  public:
    struct Param {
        std::string name;
        Tensor<T> tensor;
        std::vector<T> adam_m;
        std::vector<T> adam_v;
    };

    Tensor<T>& add(const std::string& name, Shape shape, std::vector<T> init) {
        if (index_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
        index_[name] = params_.size();
        auto t = Tensor<T>::from(std::move(shape), std::move(init), true);
        const std::size_t n = t.numel();
        params_.push_back({name, std::move(t), std::vector<T>(n, T(0)), std::vector<T>(n, T(0))});
        return params_.back().tensor;
    }

    BatchNormStats<T>& add_batch_norm(const std::string& name, std::size_t channels) {
        if (bn_index_.count(name)) throw InvalidArgument("duplicate batch-norm '" + name + "'");
        bn_index_[name] = bn_.size();
        bn_.push_back({name, BatchNormStats<T>(channels)});
        return bn_.back().stats;
    }

    Tensor<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
        return params_[it->second].tensor;
    }
    const Tensor<T>& get(const std::string& name) const {
        return const_cast<ParamStore*>(this)->get(name);
    }

    BatchNormStats<T>& batch_norm(const std::string& name) {
        auto it = bn_index_.find(name);
        if (it == bn_index_.end()) throw InvalidArgument("unknown batch-norm '" + name + "'");
        return bn_[it->second].stats;
    }

    std::deque<Param>& params() noexcept { return params_; }
    const std::deque<Param>& params() const noexcept { return params_; }

    struct NamedStats {
        std::string name;
        BatchNormStats<T> stats;
    };
    std::deque<NamedStats>& batch_norms() noexcept { return bn_; }
    const std::deque<NamedStats>& batch_norms() const noexcept { return bn_; }

    std::uint64_t step() const noexcept { return step_; }
    void set_step(std::uint64_t s) noexcept { step_ = s; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.clear_grad();
    }

  private:
    std::deque<Param> params_;
    std::map<std::string, std::size_t> index_;
    std::deque<NamedStats> bn_;
    std::map<std::string, std::size_t> bn_index_;
    std::uint64_t step_ = 0;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter that received a gradient,
/// then gradients are cleared. Parameters the loss did not reach are left
/// untouched (the node update of the last graph layer, for instance).
template <typename T>
void adam_step(ParamStore<T>& store, double lr, AdamOptions opt = {}) {
    bool any = false;
    for (const auto& p : store.params()) any = any || p.tensor.has_grad();
    if (!any) throw StateError("adam_step: no parameter has a gradient; run backward first");
    const std::uint64_t t = store.step() + 1;
    const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(opt.beta1, static_cast<double>(t)));
    const T c2 = static_cast<T>(1.0 - std::pow(opt.beta2, static_cast<double>(t)));
    const T step = static_cast<T>(lr), eps = static_cast<T>(opt.eps);
    for (auto& p : store.params()) {
        if (!p.tensor.has_grad()) continue;
        auto val = p.tensor.values();
        auto g = p.tensor.grad();
        for (std::size_t i = 0; i < val.size(); ++i) {
            p.adam_m[i] = b1 * p.adam_m[i] + (T(1) - b1) * g[i];
            p.adam_v[i] = b2 * p.adam_v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = p.adam_m[i] / c1;
            const T vhat = p.adam_v[i] / c2;
            val[i] -= step * mhat / (std::sqrt(vhat) + eps);
        }
    }
    store.set_step(t);
    store.zero_grad();
}

} // namespace gcntsp::ad
