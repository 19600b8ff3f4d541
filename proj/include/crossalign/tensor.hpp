// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a backward closure; backward()
// walks the recorded graph once in reverse topological order. Leaf gradients
// accumulate across backward() calls until zero_grad(); intermediate
// gradients are reset at the start of every traversal.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crossalign/error.hpp"

namespace crossalign {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }

    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

inline thread_local bool grad_enabled = true;

}  // namespace detail

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor.
    explicit Tensor(Shape shape, bool requires_grad = false)
        : Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad) {}

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        for (std::size_t extent : shape) {
            if (extent == 0) fail(ErrorKind::dimension, "zero extent in shape " + shape_str(shape));
        }
        if (data.size() != shape_numel(shape)) {
            fail(ErrorKind::dimension, "data length " + std::to_string(data.size()) +
                                           " does not match shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
        if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }

    /// Writable storage; only leaves may be mutated (optimizer updates, test setup).
    std::span<double> mutable_data() {
        if (!node_->is_leaf()) fail(ErrorKind::usage, "mutable_data() on a non-leaf tensor");
        return node_->data;
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }
    std::string_view op() const { return node_->op; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }

    /// Gradient buffer; empty span when no gradient has been allocated.
    std::span<const double> grad() const { return node_->grad; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
    }

    double item() const {
        if (size() != 1) fail(ErrorKind::usage, "item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    double operator[](std::size_t i) const { return node_->data[i]; }

    std::vector<Tensor> inputs() const {
        std::vector<Tensor> out;
        out.reserve(node_->inputs.size());
        for (const auto& n : node_->inputs) out.push_back(Tensor(n));
        return out;
    }

    /// Same values, no history, no gradient.
    Tensor detach() const { return Tensor(node_->shape, node_->data, false); }

    /// Identity of the underlying node.
    const void* id() const { return node_.get(); }

    // Internal: construct a recorded operation result.
    static Tensor make_op(std::string_view op, Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
        Tensor out(std::move(shape), std::move(data), false);
        bool needs = false;
        if (detail::grad_enabled) {
            for (const auto& t : inputs) needs = needs || t.requires_grad();
        }
        out.node_->op = op;
        if (needs) {
            out.node_->requires_grad = true;
            for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

    friend void backward(const Tensor& loss);
    friend std::vector<Tensor> topological_order(const Tensor& root);

private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;
};

/// Every node reachable from root with each node listed after all of its inputs.
inline std::vector<Tensor> topological_order(const Tensor& root) {
    std::vector<Tensor> order;
    std::unordered_set<const detail::Node*> visited;
    // Iterative post-order DFS; second member is the next input to visit.
    std::vector<std::pair<detail::NodePtr, std::size_t>> walk;
    walk.emplace_back(root.node_, 0);
    visited.insert(root.node_.get());
    while (!walk.empty()) {
        auto& [node, next] = walk.back();
        if (next < node->inputs.size()) {
            detail::NodePtr child = node->inputs[next++];
            if (visited.insert(child.get()).second) walk.emplace_back(std::move(child), 0);
            continue;
        }
        order.push_back(Tensor(node));
        walk.pop_back();
    }
    return order;
}

/// Populates gradients of every requires_grad tensor reachable from a scalar loss.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        fail(ErrorKind::usage, "backward() requires a scalar loss, got shape " +
                                   (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;
    const std::vector<Tensor> order = topological_order(loss);
    for (const Tensor& t : order) {
        if (!t.node_->is_leaf()) t.node_->grad.assign(t.node_->data.size(), 0.0);
    }
    loss.node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node& node = *it->node_;
        if (!node.is_leaf()) node.backward(node);
    }
}

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
    if (t.rank() != rank) {
        fail(ErrorKind::dimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                       ", got shape " + shape_str(t.shape()));
    }
}

inline bool wants_grad(const Node& n) { return n.requires_grad; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// C[m x p] = A[m x n] * B[n x p].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        fail(ErrorKind::dimension,
             "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
    std::vector<double> out(m * p, 0.0);
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = A[i * n + k];
            for (std::size_t j = 0; j < p; ++j) out[i * p + j] += aik * B[k * p + j];
        }
    }
    return Tensor::make_op("matmul", {m, p}, std::move(out), {a, b}, [m, n, p](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const auto& dC = self.grad;
        if (na.requires_grad) {
            auto& dA = na.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t k = 0; k < n; ++k) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p; ++j) acc += dC[i * p + j] * nb.data[k * p + j];
                    dA[i * n + k] += acc;
                }
            }
        }
        if (nb.requires_grad) {
            auto& dB = nb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t k = 0; k < n; ++k) {
                    const double aik = na.data[i * n + k];
                    for (std::size_t j = 0; j < p; ++j) dB[k * p + j] += aik * dC[i * p + j];
                }
            }
        }
    });
}

inline Tensor transpose(const Tensor& x) {
    detail::require_rank(x, 2, "transpose");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(r * c);
    const auto X = x.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
    return Tensor::make_op("transpose", {c, r}, std::move(out), {x}, [r, c](detail::Node& self) {
        auto& dx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += self.grad[j * r + i];
    });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        fail(ErrorKind::dimension, "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_op("reshape", std::move(shape), std::move(out), {x}, [](detail::Node& self) {
        auto& dx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    });
}

/// X[B x n] + b[n], broadcast over the batch axis.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        fail(ErrorKind::dimension,
             "add_bias: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(bias.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto b = bias.data();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += b[j];
    return Tensor::make_op("add_bias", x.shape(), std::move(out), {x, bias}, [rows, cols](detail::Node& self) {
        auto& nx = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (nx.requires_grad) {
            auto& dx = nx.ensure_grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
        }
        if (nb.requires_grad) {
            auto& db = nb.ensure_grad();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) db[j] += self.grad[i * cols + j];
        }
    });
}

/// Elementwise sum of two tensors of identical shape.
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail(ErrorKind::dimension, "add: shapes differ " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::make_op("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& d = in->ensure_grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
    });
}

inline Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x[i];
    return Tensor::make_op("scale", x.shape(), std::move(out), {x}, [factor](detail::Node& self) {
        auto& dx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
    });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator*(double factor, const Tensor& x) { return scale(x, factor); }

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_op("sum", {}, {total}, {x}, [](detail::Node& self) {
        auto& dx = self.inputs[0]->ensure_grad();
        const double g = self.grad[0];
        for (double& d : dx) d += g;
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// max(0, x); the subgradient at exactly 0 is 0.
inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return Tensor::make_op("relu", x.shape(), std::move(out), {x}, [](detail::Node& self) {
        auto& in = *self.inputs[0];
        auto& dx = in.ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (in.data[i] > 0.0) dx[i] += self.grad[i];
    });
}

/// Direct 2-D cross-correlation with zero padding, no bias.
/// input [B x C x H x W], kernel [O x C x kh x kw] -> [B x O x H' x W'].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad) {
    detail::require_rank(input, 4, "conv2d input");
    detail::require_rank(kernel, 4, "conv2d kernel");
    if (stride == 0) fail(ErrorKind::usage, "conv2d: stride must be positive");
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
    if (kernel.dim(1) != C) {
        fail(ErrorKind::dimension, "conv2d: input " + shape_str(input.shape()) + " has " + std::to_string(C) +
                                       " channels but kernel " + shape_str(kernel.shape()) + " expects " +
                                       std::to_string(kernel.dim(1)));
    }
    if (H + 2 * pad < KH || W + 2 * pad < KW) {
        fail(ErrorKind::dimension, "conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                                       shape_str(input.shape()) + " (pad " + std::to_string(pad) + ")");
    }
    const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
    const std::size_t OW = (W + 2 * pad - KW) / stride + 1;

    // Visits every (output, input, kernel) triple that touches real (unpadded) input.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < KH; ++i)
                        for (std::size_t y = 0; y < OH; ++y) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y * stride + i) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t j = 0; j < KW; ++j)
                                for (std::size_t x = 0; x < OW; ++x) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + j) -
                                                              static_cast<std::ptrdiff_t>(pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                    const std::size_t out_idx = ((b * O + o) * OH + y) * OW + x;
                                    const std::size_t in_idx =
                                        ((b * C + c) * H + static_cast<std::size_t>(iy)) * W +
                                        static_cast<std::size_t>(ix);
                                    const std::size_t k_idx = ((o * C + c) * KH + i) * KW + j;
                                    fn(out_idx, in_idx, k_idx);
                                }
                        }
    };

    std::vector<double> out(B * O * OH * OW, 0.0);
    const auto X = input.data();
    const auto K = kernel.data();
    for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out[oi] += X[ii] * K[ki]; });

    return Tensor::make_op("conv2d", {B, O, OH, OW}, std::move(out), {input, kernel},
                           [for_each_tap](detail::Node& self) {
                               auto& nx = *self.inputs[0];
                               auto& nk = *self.inputs[1];
                               const auto& g = self.grad;
                               if (nx.requires_grad) {
                                   auto& dx = nx.ensure_grad();
                                   for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                                       dx[ii] += g[oi] * nk.data[ki];
                                   });
                               }
                               if (nk.requires_grad) {
                                   auto& dk = nk.ensure_grad();
                                   for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                                       dk[ki] += g[oi] * nx.data[ii];
                                   });
                               }
                           });
}

/// Non-overlapping window x window mean pooling; trailing rows/cols that do not fill a window are dropped.
inline Tensor mean_pool2d(const Tensor& x, std::size_t window) {
    detail::require_rank(x, 4, "mean_pool2d");
    if (window == 0 || x.dim(2) < window || x.dim(3) < window) {
        fail(ErrorKind::dimension, "mean_pool2d: window " + std::to_string(window) + " does not fit " +
                                       shape_str(x.shape()));
    }
    const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = H / window, OW = W / window;
    const double inv = 1.0 / static_cast<double>(window * window);
    std::vector<double> out(planes * OH * OW, 0.0);
    const auto X = x.data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < OH; ++y)
            for (std::size_t xx = 0; xx < OW; ++xx) {
                double acc = 0.0;
                for (std::size_t i = 0; i < window; ++i)
                    for (std::size_t j = 0; j < window; ++j) acc += X[(p * H + y * window + i) * W + xx * window + j];
                out[(p * OH + y) * OW + xx] = acc * inv;
            }
    return Tensor::make_op("mean_pool2d", {x.dim(0), x.dim(1), OH, OW}, std::move(out), {x},
                           [=](detail::Node& self) {
                               auto& dx = self.inputs[0]->ensure_grad();
                               for (std::size_t p = 0; p < planes; ++p)
                                   for (std::size_t y = 0; y < OH; ++y)
                                       for (std::size_t xx = 0; xx < OW; ++xx) {
                                           const double g = self.grad[(p * OH + y) * OW + xx] * inv;
                                           for (std::size_t i = 0; i < window; ++i)
                                               for (std::size_t j = 0; j < window; ++j)
                                                   dx[(p * H + y * window + i) * W + xx * window + j] += g;
                                       }
                           });
}

/// [B x C x H x W] -> [B x C], mean over the spatial extent.
inline Tensor global_mean_pool(const Tensor& x) {
    detail::require_rank(x, 4, "global_mean_pool");
    const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
    const double inv = 1.0 / static_cast<double>(area);
    std::vector<double> out(planes, 0.0);
    const auto X = x.data();
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t a = 0; a < area; ++a) acc += X[p * area + a];
        out[p] = acc * inv;
    }
    return Tensor::make_op("global_mean_pool", {x.dim(0), x.dim(1)}, std::move(out), {x},
                           [planes, area, inv](detail::Node& self) {
                               auto& dx = self.inputs[0]->ensure_grad();
                               for (std::size_t p = 0; p < planes; ++p) {
                                   const double g = self.grad[p] * inv;
                                   for (std::size_t a = 0; a < area; ++a) dx[p * area + a] += g;
                               }
                           });
}

/// Scales each row of X[B x n] to unit L2 norm; rows with norm below eps are divided by eps.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
    detail::require_rank(x, 2, "l2_normalize_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(x.size());
    std::vector<double> norms(rows);
    const auto X = x.data();
    for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sq += X[i * cols + j] * X[i * cols + j];
        norms[i] = std::max(std::sqrt(sq), eps);
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = X[i * cols + j] / norms[i];
    }
    return Tensor::make_op("l2_normalize_rows", x.shape(), std::move(out), {x},
                           [rows, cols, eps, norms = std::move(norms)](detail::Node& self) {
                               auto& dx = self.inputs[0]->ensure_grad();
                               for (std::size_t i = 0; i < rows; ++i) {
                                   const double* y = &self.data[i * cols];
                                   const double* g = &self.grad[i * cols];
                                   if (norms[i] <= eps) {
                                       for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[j] / eps;
                                       continue;
                                   }
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
                                   for (std::size_t j = 0; j < cols; ++j)
                                       dx[i * cols + j] += (g[j] - y[j] * dot) / norms[i];
                               }
                           });
}

/// Batch mean of -log softmax(logits)[label], via log-sum-exp.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
    detail::require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (labels.size() != B) {
        fail(ErrorKind::dimension, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                       " labels for logits " + shape_str(logits.shape()));
    }
    for (std::size_t i = 0; i < B; ++i) {
        if (labels[i] >= C) {
            fail(ErrorKind::index, "softmax_cross_entropy: row " + std::to_string(i) + " has label " +
                                       std::to_string(labels[i]) + " outside [0, " + std::to_string(C) + ")");
        }
    }
    const auto Z = logits.data();
    std::vector<double> probs(B * C);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* z = &Z[i * C];
        double zmax = z[0];
        for (std::size_t j = 1; j < C; ++j) zmax = std::max(zmax, z[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += std::exp(z[j] - zmax);
        const double lse = zmax + std::log(s);
        total += lse - z[labels[i]];
        for (std::size_t j = 0; j < C; ++j) probs[i * C + j] = std::exp(z[j] - lse);
    }
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    return Tensor::make_op("softmax_cross_entropy", {}, {total / static_cast<double>(B)}, {logits},
                           [B, C, probs = std::move(probs), lab = std::move(lab)](detail::Node& self) {
                               auto& dz = self.inputs[0]->ensure_grad();
                               const double g = self.grad[0] / static_cast<double>(B);
                               for (std::size_t i = 0; i < B; ++i)
                                   for (std::size_t j = 0; j < C; ++j) {
                                       const double onehot = (j == lab[i]) ? 1.0 : 0.0;
                                       dz[i * C + j] += g * (probs[i * C + j] - onehot);
                                   }
                           });
}

}  // namespace crossalign
