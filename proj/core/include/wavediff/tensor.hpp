// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_TENSOR_HPP
#define WAVEDIFF_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "wavediff/rng.hpp"

// Minimal reverse-mode autodiff over dense row-major tensors. Exactly the
// operations the 1D U-Net needs, templated on the scalar type so gradient
// checks can run in double while training runs in float.
namespace wavediff::nn {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

/// Tape construction switch (thread local so concurrent inference is safe).
struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
};

template <typename T>
struct Node {
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily during backward
    Shape shape;
    bool requires_grad = false;
    std::string name;  // set for parameters
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value.assign(static_cast<size_t>(nn::numel(n->shape)), T(0));
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(Shape shape, T v) {
        auto t = zeros(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != nn::numel(shape)) {
            throw std::invalid_argument("Tensor::from_data: " + shape_str(shape) + " needs " +
                                        std::to_string(nn::numel(shape)) + " values, got " +
                                        std::to_string(data.size()));
        }
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.data()) v = static_cast<T>(rng.normal());
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t rank() const { return node_->shape.size(); }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    const std::string& name() const { return node_->name; }
    void set_name(std::string n) { node_->name = std::move(n); }

    std::shared_ptr<Node<T>> node() const { return node_; }

    T item() const {
        if (node_->numel() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return node_->value[0];
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::initializer_list<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(nn::numel(n->shape)), T(0));
    if (GradMode::enabled()) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            n->requires_grad = true;
            for (const auto& in : inputs) n->parents.push_back(in.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

/// Accumulates gradients through the graph below `loss`. `seed` defaults to
/// ones (the usual scalar-loss convention).
template <typename T>
void backward(const Tensor<T>& loss, const std::vector<T>* seed = nullptr) {
    auto root = loss.node();
    if (!root->requires_grad) return;  // nothing trainable below

    // iterative post-order DFS over grad-requiring parents
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* parent = node->parents[idx++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    if (seed) {
        if (seed->size() != root->value.size()) {
            throw std::invalid_argument("backward: seed size mismatch");
        }
        for (size_t i = 0; i < seed->size(); ++i) root->grad[i] += (*seed)[i];
    } else {
        std::fill(root->grad.begin(), root->grad.end(), T(1));
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->value[i] + bn->value[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->value[i] - bn->value[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>(a.shape(), {a, b}, [an, bn](Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->value[i] * bn->value[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    auto an = a.node();
    auto out = detail::make_op<T>(a.shape(), {a}, [an, c](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->value[i] * c;
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    auto an = a.node();
    auto out = detail::make_op<T>(a.shape(), {a}, [an](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->value[i] + c;
    return out;
}

template <typename T, typename Fwd, typename Grad>
Tensor<T> unary_op(const Tensor<T>& a, Fwd fwd, Grad dydx) {
    auto an = a.node();
    auto out = detail::make_op<T>(a.shape(), {a}, [an, dydx](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            an->grad[i] += self.grad[i] * dydx(an->value[i], self.value[i]);
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = fwd(an->value[i]);
    return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(x / (T(1) + std::exp(-x))); },
        [](T x, T) {
            const T s = T(1) / (T(1) + std::exp(-x));
            return static_cast<T>(s * (T(1) + x * (T(1) - s)));
        });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(std::tanh(x)); },
        [](T, T y) { return static_cast<T>(T(1) - y * y); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(T(1) / (T(1) + std::exp(-x))); },
        [](T, T y) { return static_cast<T>(y * (T(1) - y)); });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(std::exp(x)); },
        [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sin_op(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(std::sin(x)); },
        [](T x, T) { return static_cast<T>(std::cos(x)); });
}

template <typename T>
Tensor<T> cos_op(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return static_cast<T>(std::cos(x)); },
        [](T x, T) { return static_cast<T>(-std::sin(x)); });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    auto an = a.node();
    auto out = detail::make_op<T>({1}, {a}, [an](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0];
    });
    T acc = T(0);
    for (T v : an->value) acc += v;
    out.data()[0] = acc;
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    const T inv = T(1) / static_cast<T>(a.numel());
    return scale(sum(a), inv);
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
    auto d = sub(pred, target);
    return mean(mul(d, d));
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (nn::numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) +
                                    " -> " + shape_str(shape));
    }
    auto an = a.node();
    auto out = detail::make_op<T>(std::move(shape), {a}, [an](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
    out.data() = an->value;
    return out;
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    auto n = std::make_shared<Node<T>>();
    n->shape = a.shape();
    n->value = a.data();
    return Tensor<T>(std::move(n));
}

/// [B, m, n] -> [B, n, m]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    if (a.rank() != 3) throw std::invalid_argument("transpose_last2 expects rank 3");
    const int64_t B = a.dim(0), m = a.dim(1), n = a.dim(2);
    auto an = a.node();
    auto out = detail::make_op<T>({B, n, m}, {a}, [an, B, m, n](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < m; ++j) {
                    an->grad[(b * m + j) * n + i] += self.grad[(b * n + i) * m + j];
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t j = 0; j < m; ++j) {
            for (int64_t i = 0; i < n; ++i) {
                out.data()[(b * n + i) * m + j] = an->value[(b * m + j) * n + i];
            }
        }
    }
    return out;
}

/// Concatenate rank-3 tensors along dim 1 (channels).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
        throw std::invalid_argument("concat_channels: incompatible shapes " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), L = a.dim(2);
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>({B, Ca + Cb, L}, {a, b}, [an, bn, B, Ca, Cb, L](Node<T>& self) {
        for (int64_t n = 0; n < B; ++n) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t c = 0; c < Ca; ++c) {
                    for (int64_t l = 0; l < L; ++l) {
                        an->grad[(n * Ca + c) * L + l] += self.grad[(n * (Ca + Cb) + c) * L + l];
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t c = 0; c < Cb; ++c) {
                    for (int64_t l = 0; l < L; ++l) {
                        bn->grad[(n * Cb + c) * L + l] +=
                            self.grad[(n * (Ca + Cb) + Ca + c) * L + l];
                    }
                }
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t c = 0; c < Ca; ++c) {
            for (int64_t l = 0; l < L; ++l) {
                out.data()[(n * (Ca + Cb) + c) * L + l] = an->value[(n * Ca + c) * L + l];
            }
        }
        for (int64_t c = 0; c < Cb; ++c) {
            for (int64_t l = 0; l < L; ++l) {
                out.data()[(n * (Ca + Cb) + Ca + c) * L + l] = bn->value[(n * Cb + c) * L + l];
            }
        }
    }
    return out;
}

/// Channels [c0, c1) of a rank-3 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int64_t c0, int64_t c1) {
    if (a.rank() != 3 || c0 < 0 || c1 > a.dim(1) || c0 >= c1) {
        throw std::invalid_argument("slice_channels: bad range");
    }
    const int64_t B = a.dim(0), C = a.dim(1), L = a.dim(2), Cs = c1 - c0;
    auto an = a.node();
    auto out = detail::make_op<T>({B, Cs, L}, {a}, [an, B, C, L, c0, Cs](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t n = 0; n < B; ++n) {
            for (int64_t c = 0; c < Cs; ++c) {
                for (int64_t l = 0; l < L; ++l) {
                    an->grad[(n * C + c0 + c) * L + l] += self.grad[(n * Cs + c) * L + l];
                }
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t c = 0; c < Cs; ++c) {
            for (int64_t l = 0; l < L; ++l) {
                out.data()[(n * Cs + c) * L + l] = an->value[(n * C + c0 + c) * L + l];
            }
        }
    }
    return out;
}

/// Length window [l0, l0 + len) of a rank-3 tensor.
template <typename T>
Tensor<T> crop_length(const Tensor<T>& a, int64_t l0, int64_t len) {
    if (a.rank() != 3 || l0 < 0 || l0 + len > a.dim(2) || len < 1) {
        throw std::invalid_argument("crop_length: bad range");
    }
    const int64_t B = a.dim(0), C = a.dim(1), L = a.dim(2);
    auto an = a.node();
    auto out = detail::make_op<T>({B, C, len}, {a}, [an, B, C, L, l0, len](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t n = 0; n < B; ++n) {
            for (int64_t c = 0; c < C; ++c) {
                for (int64_t l = 0; l < len; ++l) {
                    an->grad[(n * C + c) * L + l0 + l] += self.grad[(n * C + c) * len + l];
                }
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t l = 0; l < len; ++l) {
                out.data()[(n * C + c) * len + l] = an->value[(n * C + c) * L + l0 + l];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul / softmax

/// [m,k]x[k,n] or batched [B,m,k]x[B,k,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const bool batched = a.rank() == 3;
    if (batched) {
        if (b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
            throw std::invalid_argument("matmul: incompatible " + shape_str(a.shape()) + " x " +
                                        shape_str(b.shape()));
        }
    } else if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    }
    const int64_t B = batched ? a.dim(0) : 1;
    const int64_t m = a.dim(batched ? 1 : 0);
    const int64_t k = a.dim(batched ? 2 : 1);
    const int64_t n = b.dim(batched ? 2 : 1);

    Shape out_shape = batched ? Shape{B, m, n} : Shape{m, n};
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>(std::move(out_shape), {a, b}, [an, bn, B, m, k, n](Node<T>& self) {
        for (int64_t batch = 0; batch < B; ++batch) {
            const T* A = an->value.data() + batch * m * k;
            const T* Bv = bn->value.data() + batch * k * n;
            const T* G = self.grad.data() + batch * m * n;
            if (an->requires_grad) {
                an->ensure_grad();
                T* dA = an->grad.data() + batch * m * k;
                for (int64_t i = 0; i < m; ++i) {
                    for (int64_t j = 0; j < k; ++j) {
                        T acc = T(0);
                        for (int64_t l = 0; l < n; ++l) acc += G[i * n + l] * Bv[j * n + l];
                        dA[i * k + j] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* dB = bn->grad.data() + batch * k * n;
                for (int64_t j = 0; j < k; ++j) {
                    for (int64_t l = 0; l < n; ++l) {
                        T acc = T(0);
                        for (int64_t i = 0; i < m; ++i) acc += A[i * k + j] * G[i * n + l];
                        dB[j * n + l] += acc;
                    }
                }
            }
        }
    });
    for (int64_t batch = 0; batch < B; ++batch) {
        const T* A = an->value.data() + batch * m * k;
        const T* Bv = bn->value.data() + batch * k * n;
        T* O = out.data().data() + batch * m * n;
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < k; ++j) {
                const T av = A[i * k + j];
                if (av == T(0)) continue;
                const T* brow = Bv + j * n;
                T* orow = O + i * n;
                for (int64_t l = 0; l < n; ++l) orow[l] += av * brow[l];
            }
        }
    }
    return out;
}

/// Softmax over the last dimension.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
    const int64_t D = a.dim(a.rank() - 1);
    const int64_t rows = a.numel() / D;
    auto an = a.node();
    auto out = detail::make_op<T>(a.shape(), {a}, [an, rows, D](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * D;
            const T* g = self.grad.data() + r * D;
            T dot = T(0);
            for (int64_t i = 0; i < D; ++i) dot += g[i] * y[i];
            T* dx = an->grad.data() + r * D;
            for (int64_t i = 0; i < D; ++i) dx[i] += y[i] * (g[i] - dot);
        }
    });
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = an->value.data() + r * D;
        T* y = out.data().data() + r * D;
        T mx = x[0];
        for (int64_t i = 1; i < D; ++i) mx = std::max(mx, x[i]);
        T denom = T(0);
        for (int64_t i = 0; i < D; ++i) {
            y[i] = std::exp(x[i] - mx);
            denom += y[i];
        }
        for (int64_t i = 0; i < D; ++i) y[i] /= denom;
    }
    return out;
}

// ---------------------------------------------------------------------------
// broadcast helpers

/// x [B,C,L] + bias [C]
template <typename T>
Tensor<T> add_bias_channels(const Tensor<T>& x, const Tensor<T>& bias) {
    if (x.rank() != 3 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw std::invalid_argument("add_bias_channels: incompatible shapes");
    }
    const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    auto xn = x.node();
    auto bn = bias.node();
    auto out = detail::make_op<T>(x.shape(), {x, bias}, [xn, bn, B, C, L](Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t n = 0; n < B; ++n) {
                for (int64_t c = 0; c < C; ++c) {
                    T acc = T(0);
                    const T* g = self.grad.data() + (n * C + c) * L;
                    for (int64_t l = 0; l < L; ++l) acc += g[l];
                    bn->grad[c] += acc;
                }
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const T b = bn->value[c];
            const T* src = xn->value.data() + (n * C + c) * L;
            T* dst = out.data().data() + (n * C + c) * L;
            for (int64_t l = 0; l < L; ++l) dst[l] = src[l] + b;
        }
    }
    return out;
}

/// x [..., D] + bias [D]
template <typename T>
Tensor<T> add_bias_lastdim(const Tensor<T>& x, const Tensor<T>& bias) {
    const int64_t D = x.dim(x.rank() - 1);
    if (bias.rank() != 1 || bias.dim(0) != D) {
        throw std::invalid_argument("add_bias_lastdim: incompatible shapes");
    }
    const int64_t rows = x.numel() / D;
    auto xn = x.node();
    auto bn = bias.node();
    auto out = detail::make_op<T>(x.shape(), {x, bias}, [xn, bn, rows, D](Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const T* g = self.grad.data() + r * D;
                for (int64_t d = 0; d < D; ++d) bn->grad[d] += g[d];
            }
        }
    });
    for (int64_t r = 0; r < rows; ++r) {
        const T* src = xn->value.data() + r * D;
        T* dst = out.data().data() + r * D;
        for (int64_t d = 0; d < D; ++d) dst[d] = src[d] + bn->value[d];
    }
    return out;
}

/// y = x * (1 + s) + h with x [B,C,L] and s,h [B,C] (per-channel modulation).
template <typename T>
Tensor<T> scale_shift_channels(const Tensor<T>& x, const Tensor<T>& s, const Tensor<T>& h) {
    if (x.rank() != 3 || s.rank() != 2 || h.rank() != 2 || s.dim(0) != x.dim(0) ||
        s.dim(1) != x.dim(1) || h.shape() != s.shape()) {
        throw std::invalid_argument("scale_shift_channels: incompatible shapes");
    }
    const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    auto xn = x.node();
    auto sn = s.node();
    auto hn = h.node();
    auto out = detail::make_op<T>(x.shape(), {x, s, h}, [xn, sn, hn, B, C, L](Node<T>& self) {
        for (int64_t n = 0; n < B; ++n) {
            for (int64_t c = 0; c < C; ++c) {
                const int64_t base = (n * C + c) * L;
                const T* g = self.grad.data() + base;
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const T k = T(1) + sn->value[n * C + c];
                    for (int64_t l = 0; l < L; ++l) xn->grad[base + l] += g[l] * k;
                }
                if (sn->requires_grad) {
                    sn->ensure_grad();
                    T acc = T(0);
                    for (int64_t l = 0; l < L; ++l) acc += g[l] * xn->value[base + l];
                    sn->grad[n * C + c] += acc;
                }
                if (hn->requires_grad) {
                    hn->ensure_grad();
                    T acc = T(0);
                    for (int64_t l = 0; l < L; ++l) acc += g[l];
                    hn->grad[n * C + c] += acc;
                }
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (n * C + c) * L;
            const T k = T(1) + sn->value[n * C + c];
            const T shift = hn->value[n * C + c];
            for (int64_t l = 0; l < L; ++l) {
                out.data()[base + l] = xn->value[base + l] * k + shift;
            }
        }
    }
    return out;
}

/// outer(t [B], w [D]) -> [B, D]
template <typename T>
Tensor<T> outer(const Tensor<T>& t, const Tensor<T>& w) {
    if (t.rank() != 1 || w.rank() != 1) throw std::invalid_argument("outer expects two vectors");
    const int64_t B = t.dim(0), D = w.dim(0);
    auto tn = t.node();
    auto wn = w.node();
    auto out = detail::make_op<T>({B, D}, {t, w}, [tn, wn, B, D](Node<T>& self) {
        if (tn->requires_grad) {
            tn->ensure_grad();
            for (int64_t n = 0; n < B; ++n) {
                T acc = T(0);
                for (int64_t d = 0; d < D; ++d) acc += self.grad[n * D + d] * wn->value[d];
                tn->grad[n] += acc;
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int64_t d = 0; d < D; ++d) {
                T acc = T(0);
                for (int64_t n = 0; n < B; ++n) acc += self.grad[n * D + d] * tn->value[n];
                wn->grad[d] += acc;
            }
        }
    });
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t d = 0; d < D; ++d) out.data()[n * D + d] = tn->value[n] * wn->value[d];
    }
    return out;
}

/// Concatenate two rank-2 tensors along the last dim.
template <typename T>
Tensor<T> concat_lastdim2(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw std::invalid_argument("concat_lastdim2: incompatible shapes");
    }
    const int64_t R = a.dim(0), Da = a.dim(1), Db = b.dim(1);
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>({R, Da + Db}, {a, b}, [an, bn, R, Da, Db](Node<T>& self) {
        for (int64_t r = 0; r < R; ++r) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t d = 0; d < Da; ++d) {
                    an->grad[r * Da + d] += self.grad[r * (Da + Db) + d];
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t d = 0; d < Db; ++d) {
                    bn->grad[r * Db + d] += self.grad[r * (Da + Db) + Da + d];
                }
            }
        }
    });
    for (int64_t r = 0; r < R; ++r) {
        for (int64_t d = 0; d < Da; ++d) out.data()[r * (Da + Db) + d] = an->value[r * Da + d];
        for (int64_t d = 0; d < Db; ++d) out.data()[r * (Da + Db) + Da + d] = bn->value[r * Db + d];
    }
    return out;
}

/// Row lookup: table [V, E], idx (flattened [B, S]) -> [B, S, E].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int64_t>& idx, int64_t B,
                           int64_t S) {
    if (table.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
    if (static_cast<int64_t>(idx.size()) != B * S) {
        throw std::invalid_argument("embedding_lookup: index count mismatch");
    }
    const int64_t V = table.dim(0), E = table.dim(1);
    for (int64_t i : idx) {
        if (i < 0 || i >= V) throw std::invalid_argument("embedding_lookup: index out of range");
    }
    auto tn = table.node();
    auto out = detail::make_op<T>({B, S, E}, {table}, [tn, idx, E](Node<T>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r) {
            const T* g = self.grad.data() + r * E;
            T* dst = tn->grad.data() + idx[r] * E;
            for (int64_t e = 0; e < E; ++e) dst[e] += g[e];
        }
    });
    for (size_t r = 0; r < idx.size(); ++r) {
        const T* src = tn->value.data() + idx[r] * E;
        T* dst = out.data().data() + r * E;
        for (int64_t e = 0; e < E; ++e) dst[e] = src[e];
    }
    return out;
}

/// Per-slot selection over [B, S, E]: out[b,s,:] = mask[b*S+s] ? a : b.
template <typename T>
Tensor<T> where_slots(const std::vector<uint8_t>& mask, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "where_slots");
    if (a.rank() != 3) throw std::invalid_argument("where_slots expects rank 3");
    const int64_t B = a.dim(0), S = a.dim(1), E = a.dim(2);
    if (static_cast<int64_t>(mask.size()) != B * S) {
        throw std::invalid_argument("where_slots: mask size mismatch");
    }
    auto an = a.node();
    auto bn = b.node();
    auto out = detail::make_op<T>(a.shape(), {a, b}, [an, bn, mask, E](Node<T>& self) {
        for (size_t r = 0; r < mask.size(); ++r) {
            auto* target = mask[r] ? an.get() : bn.get();
            if (!target->requires_grad) continue;
            target->ensure_grad();
            const T* g = self.grad.data() + r * E;
            T* dst = target->grad.data() + r * E;
            for (int64_t e = 0; e < E; ++e) dst[e] += g[e];
        }
    });
    for (size_t r = 0; r < mask.size(); ++r) {
        const T* src = (mask[r] ? an->value.data() : bn->value.data()) + r * E;
        T* dst = out.data().data() + r * E;
        for (int64_t e = 0; e < E; ++e) dst[e] = src[e];
    }
    return out;
}

// ---------------------------------------------------------------------------
// head reshapes for attention

/// [B, H*Dh, L] -> [B*H, L, Dh]
template <typename T>
Tensor<T> heads_to_rows(const Tensor<T>& x, int64_t H) {
    if (x.rank() != 3 || x.dim(1) % H != 0) throw std::invalid_argument("heads_to_rows: bad shape");
    const int64_t B = x.dim(0), D = x.dim(1), L = x.dim(2), Dh = D / H;
    auto xn = x.node();
    auto out = detail::make_op<T>({B * H, L, Dh}, {x}, [xn, B, H, D, L, Dh](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t h = 0; h < H; ++h) {
                for (int64_t l = 0; l < L; ++l) {
                    for (int64_t d = 0; d < Dh; ++d) {
                        xn->grad[(b * D + h * Dh + d) * L + l] +=
                            self.grad[((b * H + h) * L + l) * Dh + d];
                    }
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t l = 0; l < L; ++l) {
                for (int64_t d = 0; d < Dh; ++d) {
                    out.data()[((b * H + h) * L + l) * Dh + d] =
                        xn->value[(b * D + h * Dh + d) * L + l];
                }
            }
        }
    }
    return out;
}

/// [B*H, L, Dh] -> [B, H*Dh, L]
template <typename T>
Tensor<T> rows_to_heads(const Tensor<T>& x, int64_t H) {
    if (x.rank() != 3 || x.dim(0) % H != 0) throw std::invalid_argument("rows_to_heads: bad shape");
    const int64_t B = x.dim(0) / H, L = x.dim(1), Dh = x.dim(2), D = H * Dh;
    auto xn = x.node();
    auto out = detail::make_op<T>({B, D, L}, {x}, [xn, B, H, D, L, Dh](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t h = 0; h < H; ++h) {
                for (int64_t l = 0; l < L; ++l) {
                    for (int64_t d = 0; d < Dh; ++d) {
                        xn->grad[((b * H + h) * L + l) * Dh + d] +=
                            self.grad[(b * D + h * Dh + d) * L + l];
                    }
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t l = 0; l < L; ++l) {
                for (int64_t d = 0; d < Dh; ++d) {
                    out.data()[(b * D + h * Dh + d) * L + l] =
                        xn->value[((b * H + h) * L + l) * Dh + d];
                }
            }
        }
    }
    return out;
}

/// [B, S, H*Dh] -> [B*H, S, Dh] (for cross-attention keys/values)
template <typename T>
Tensor<T> seq_to_rows(const Tensor<T>& x, int64_t H) {
    if (x.rank() != 3 || x.dim(2) % H != 0) throw std::invalid_argument("seq_to_rows: bad shape");
    const int64_t B = x.dim(0), S = x.dim(1), D = x.dim(2), Dh = D / H;
    auto xn = x.node();
    auto out = detail::make_op<T>({B * H, S, Dh}, {x}, [xn, B, H, S, D, Dh](Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t h = 0; h < H; ++h) {
                for (int64_t s = 0; s < S; ++s) {
                    for (int64_t d = 0; d < Dh; ++d) {
                        xn->grad[(b * S + s) * D + h * Dh + d] +=
                            self.grad[((b * H + h) * S + s) * Dh + d];
                    }
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t s = 0; s < S; ++s) {
                for (int64_t d = 0; d < Dh; ++d) {
                    out.data()[((b * H + h) * S + s) * Dh + d] =
                        xn->value[(b * S + s) * D + h * Dh + d];
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolutions / group norm

/// x [B,Ci,L], w [Co,Ci,K] -> [B,Co,(L+2p-K)/stride+1]
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                 int64_t pad) {
    if (x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(1)) {
        throw std::invalid_argument("conv1d: incompatible shapes " + shape_str(x.shape()) +
                                    " and " + shape_str(w.shape()));
    }
    const int64_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
    const int64_t Co = w.dim(0), K = w.dim(2);
    if (L + 2 * pad < K) throw std::invalid_argument("conv1d: input shorter than kernel");
    const int64_t Lo = (L + 2 * pad - K) / stride + 1;

    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    auto out = detail::make_op<T>({B, Co, Lo}, {x, w, bias},
                                  [xn, wn, bn, B, Ci, L, Co, K, Lo, stride, pad](Node<T>& self) {
        const bool dx = xn->requires_grad, dw = wn->requires_grad, db = bn->requires_grad;
        if (dx) xn->ensure_grad();
        if (dw) wn->ensure_grad();
        if (db) bn->ensure_grad();
        for (int64_t n = 0; n < B; ++n) {
            for (int64_t co = 0; co < Co; ++co) {
                const T* g = self.grad.data() + (n * Co + co) * Lo;
                if (db) {
                    T acc = T(0);
                    for (int64_t lo = 0; lo < Lo; ++lo) acc += g[lo];
                    bn->grad[co] += acc;
                }
                for (int64_t lo = 0; lo < Lo; ++lo) {
                    const T gv = g[lo];
                    if (gv == T(0)) continue;
                    const int64_t base = lo * stride - pad;
                    const int64_t k0 = std::max<int64_t>(0, -base);
                    const int64_t k1 = std::min<int64_t>(K, L - base);
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        const T* xr = xn->value.data() + (n * Ci + ci) * L + base;
                        const T* wr = wn->value.data() + (co * Ci + ci) * K;
                        if (dx) {
                            T* dxr = xn->grad.data() + (n * Ci + ci) * L + base;
                            for (int64_t k = k0; k < k1; ++k) dxr[k] += gv * wr[k];
                        }
                        if (dw) {
                            T* dwr = wn->grad.data() + (co * Ci + ci) * K;
                            for (int64_t k = k0; k < k1; ++k) dwr[k] += gv * xr[k];
                        }
                    }
                }
            }
        }
    });

    for (int64_t n = 0; n < B; ++n) {
        for (int64_t co = 0; co < Co; ++co) {
            T* dst = out.data().data() + (n * Co + co) * Lo;
            const T b = bn->value[co];
            for (int64_t lo = 0; lo < Lo; ++lo) {
                const int64_t base = lo * stride - pad;
                const int64_t k0 = std::max<int64_t>(0, -base);
                const int64_t k1 = std::min<int64_t>(K, L - base);
                T acc = b;
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    const T* xr = xn->value.data() + (n * Ci + ci) * L + base;
                    const T* wr = wn->value.data() + (co * Ci + ci) * K;
                    for (int64_t k = k0; k < k1; ++k) acc += xr[k] * wr[k];
                }
                dst[lo] = acc;
            }
        }
    }
    return out;
}

/// x [B,Ci,L], w [Ci,Co,K] -> [B,Co,(L-1)*stride - 2p + K]
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           int64_t stride, int64_t pad) {
    if (x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(0)) {
        throw std::invalid_argument("conv_transpose1d: incompatible shapes " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const int64_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
    const int64_t Co = w.dim(1), K = w.dim(2);
    const int64_t Lo = (L - 1) * stride - 2 * pad + K;
    if (Lo < 1) throw std::invalid_argument("conv_transpose1d: empty output");

    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    auto out = detail::make_op<T>({B, Co, Lo}, {x, w, bias},
                                  [xn, wn, bn, B, Ci, L, Co, K, Lo, stride, pad](Node<T>& self) {
        const bool dx = xn->requires_grad, dw = wn->requires_grad, db = bn->requires_grad;
        if (dx) xn->ensure_grad();
        if (dw) wn->ensure_grad();
        if (db) bn->ensure_grad();
        if (db) {
            for (int64_t n = 0; n < B; ++n) {
                for (int64_t co = 0; co < Co; ++co) {
                    const T* g = self.grad.data() + (n * Co + co) * Lo;
                    T acc = T(0);
                    for (int64_t lo = 0; lo < Lo; ++lo) acc += g[lo];
                    bn->grad[co] += acc;
                }
            }
        }
        for (int64_t n = 0; n < B; ++n) {
            for (int64_t ci = 0; ci < Ci; ++ci) {
                const T* xr = xn->value.data() + (n * Ci + ci) * L;
                T* dxr = dx ? xn->grad.data() + (n * Ci + ci) * L : nullptr;
                for (int64_t li = 0; li < L; ++li) {
                    const int64_t base = li * stride - pad;
                    const int64_t k0 = std::max<int64_t>(0, -base);
                    const int64_t k1 = std::min<int64_t>(K, Lo - base);
                    for (int64_t co = 0; co < Co; ++co) {
                        const T* g = self.grad.data() + (n * Co + co) * Lo + base;
                        const T* wr = wn->value.data() + (ci * Co + co) * K;
                        if (dx) {
                            T acc = T(0);
                            for (int64_t k = k0; k < k1; ++k) acc += g[k] * wr[k];
                            dxr[li] += acc;
                        }
                        if (dw) {
                            T* dwr = wn->grad.data() + (ci * Co + co) * K;
                            const T xv = xr[li];
                            for (int64_t k = k0; k < k1; ++k) dwr[k] += g[k] * xv;
                        }
                    }
                }
            }
        }
    });

    for (int64_t n = 0; n < B; ++n) {
        for (int64_t co = 0; co < Co; ++co) {
            T* dst = out.data().data() + (n * Co + co) * Lo;
            const T b = bn->value[co];
            for (int64_t lo = 0; lo < Lo; ++lo) dst[lo] = b;
        }
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const T* xr = xn->value.data() + (n * Ci + ci) * L;
            for (int64_t li = 0; li < L; ++li) {
                const T xv = xr[li];
                if (xv == T(0)) continue;
                const int64_t base = li * stride - pad;
                const int64_t k0 = std::max<int64_t>(0, -base);
                const int64_t k1 = std::min<int64_t>(K, Lo - base);
                for (int64_t co = 0; co < Co; ++co) {
                    T* dst = out.data().data() + (n * Co + co) * Lo + base;
                    const T* wr = wn->value.data() + (ci * Co + co) * K;
                    for (int64_t k = k0; k < k1; ++k) dst[k] += xv * wr[k];
                }
            }
        }
    }
    return out;
}

/// Group normalization over [B,C,L] with per-channel affine.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     int64_t groups, T eps = static_cast<T>(1e-5)) {
    if (x.rank() != 3 || x.dim(1) % groups != 0) {
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    }
    if (gamma.rank() != 1 || gamma.dim(0) != x.dim(1) || beta.shape() != gamma.shape()) {
        throw std::invalid_argument("group_norm: affine shape mismatch");
    }
    const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    const int64_t Cg = C / groups;
    const int64_t group_elems = Cg * L;

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();

    // saved for backward
    auto xhat = std::make_shared<std::vector<T>>(xn->value.size());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(B * groups));

    auto out = detail::make_op<T>(
        x.shape(), {x, gamma, beta},
        [xn, gn, bn, xhat, inv_std, B, C, L, Cg, groups, group_elems](Node<T>& self) {
            const bool dx = xn->requires_grad;
            if (dx) xn->ensure_grad();
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();

            for (int64_t n = 0; n < B; ++n) {
                for (int64_t g = 0; g < groups; ++g) {
                    const int64_t c0 = g * Cg;
                    // dL/dxhat plus the two means needed for dx
                    T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                    for (int64_t cc = 0; cc < Cg; ++cc) {
                        const int64_t c = c0 + cc;
                        const int64_t base = (n * C + c) * L;
                        const T gam = gn->value[c];
                        for (int64_t l = 0; l < L; ++l) {
                            const T go = self.grad[base + l];
                            const T xh = (*xhat)[base + l];
                            if (gn->requires_grad) gn->grad[c] += go * xh;
                            if (bn->requires_grad) bn->grad[c] += go;
                            const T dxh = go * gam;
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xh;
                        }
                    }
                    if (!dx) continue;
                    mean_dxhat /= static_cast<T>(group_elems);
                    mean_dxhat_xhat /= static_cast<T>(group_elems);
                    const T inv = (*inv_std)[n * groups + g];
                    for (int64_t cc = 0; cc < Cg; ++cc) {
                        const int64_t c = c0 + cc;
                        const int64_t base = (n * C + c) * L;
                        const T gam = gn->value[c];
                        for (int64_t l = 0; l < L; ++l) {
                            const T dxh = self.grad[base + l] * gam;
                            const T xh = (*xhat)[base + l];
                            xn->grad[base + l] +=
                                inv * (dxh - mean_dxhat - xh * mean_dxhat_xhat);
                        }
                    }
                }
            }
        });

    for (int64_t n = 0; n < B; ++n) {
        for (int64_t g = 0; g < groups; ++g) {
            const int64_t c0 = g * Cg;
            T m = T(0);
            for (int64_t cc = 0; cc < Cg; ++cc) {
                const T* src = xn->value.data() + (n * C + c0 + cc) * L;
                for (int64_t l = 0; l < L; ++l) m += src[l];
            }
            m /= static_cast<T>(group_elems);
            T var = T(0);
            for (int64_t cc = 0; cc < Cg; ++cc) {
                const T* src = xn->value.data() + (n * C + c0 + cc) * L;
                for (int64_t l = 0; l < L; ++l) {
                    const T d = src[l] - m;
                    var += d * d;
                }
            }
            var /= static_cast<T>(group_elems);
            const T inv = T(1) / std::sqrt(var + eps);
            (*inv_std)[n * groups + g] = inv;
            for (int64_t cc = 0; cc < Cg; ++cc) {
                const int64_t c = c0 + cc;
                const int64_t base = (n * C + c) * L;
                const T gam = gn->value[c];
                const T bet = bn->value[c];
                for (int64_t l = 0; l < L; ++l) {
                    const T xh = (xn->value[base + l] - m) * inv;
                    (*xhat)[base + l] = xh;
                    out.data()[base + l] = xh * gam + bet;
                }
            }
        }
    }
    return out;
}

}  // namespace wavediff::nn

#endif  // WAVEDIFF_TENSOR_HPP
