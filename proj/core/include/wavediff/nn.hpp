// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_NN_HPP
#define WAVEDIFF_NN_HPP

#include <numeric>
#include <optional>

#include "wavediff/tensor.hpp"

namespace wavediff::nn {

enum class Init { fan_in_uniform, zero, normal };

/// Ordered, named collection of trainable tensors. Creation order defines
/// both the RNG consumption order and the checkpoint payload order.
template <typename T>
class ParamRegistry {
public:
    Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng,
                     int64_t fan_in = 0) {
        for (const auto& [existing, _] : items_) {
            if (existing == name) throw std::logic_error("duplicate parameter name: " + name);
        }
        auto t = Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
        t.set_name(name);
        switch (init) {
            case Init::zero:
                break;
            case Init::normal:
                for (auto& v : t.data()) v = static_cast<T>(rng.normal());
                break;
            case Init::fan_in_uniform: {
                if (fan_in <= 0) throw std::logic_error("fan_in required for " + name);
                const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
                break;
            }
        }
        items_.emplace_back(name, t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    Tensor<T> find(const std::string& name) const {
        for (const auto& [n, t] : items_) {
            if (n == name) return t;
        }
        throw std::out_of_range("no parameter named " + name);
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [_, t] : items_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : items_) {
            t.node()->grad.assign(t.data().size(), T(0));
        }
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

template <typename T>
struct Conv1d {
    Tensor<T> w;  // [Co, Ci, K]
    Tensor<T> b;  // [Co]
    int64_t stride = 1;
    int64_t pad = 0;

    Conv1d() = default;
    Conv1d(ParamRegistry<T>& reg, const std::string& prefix, int64_t in_ch, int64_t out_ch,
           int64_t kernel, int64_t stride_, int64_t pad_, Rng& rng, bool zero_init = false) {
        const Init init = zero_init ? Init::zero : Init::fan_in_uniform;
        w = reg.create(prefix + ".w", {out_ch, in_ch, kernel}, init, rng, in_ch * kernel);
        b = reg.create(prefix + ".b", {out_ch}, zero_init ? Init::zero : Init::fan_in_uniform, rng,
                       in_ch * kernel);
        stride = stride_;
        pad = pad_;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv1d(x, w, b, stride, pad); }
};

template <typename T>
struct ConvTranspose1d {
    Tensor<T> w;  // [Ci, Co, K]
    Tensor<T> b;  // [Co]
    int64_t stride = 1;
    int64_t pad = 0;

    ConvTranspose1d() = default;
    ConvTranspose1d(ParamRegistry<T>& reg, const std::string& prefix, int64_t in_ch, int64_t out_ch,
                    int64_t kernel, int64_t stride_, int64_t pad_, Rng& rng,
                    bool zero_init = false) {
        const Init init = zero_init ? Init::zero : Init::fan_in_uniform;
        w = reg.create(prefix + ".w", {in_ch, out_ch, kernel}, init, rng, in_ch * kernel);
        b = reg.create(prefix + ".b", {out_ch}, zero_init ? Init::zero : Init::fan_in_uniform, rng,
                       in_ch * kernel);
        stride = stride_;
        pad = pad_;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose1d(x, w, b, stride, pad); }
};

template <typename T>
struct Linear {
    Tensor<T> w;  // [In, Out]
    Tensor<T> b;  // [Out]

    Linear() = default;
    Linear(ParamRegistry<T>& reg, const std::string& prefix, int64_t in_dim, int64_t out_dim,
           Rng& rng, bool zero_init = false) {
        const Init init = zero_init ? Init::zero : Init::fan_in_uniform;
        w = reg.create(prefix + ".w", {in_dim, out_dim}, init, rng, in_dim);
        b = reg.create(prefix + ".b", {out_dim}, zero_init ? Init::zero : Init::fan_in_uniform, rng,
                       in_dim);
    }

    /// x [R, In] -> [R, Out]
    Tensor<T> forward(const Tensor<T>& x) const { return add_bias_lastdim(matmul(x, w), b); }
};

template <typename T>
struct GroupNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    int64_t groups = 1;

    GroupNorm() = default;
    GroupNorm(ParamRegistry<T>& reg, const std::string& prefix, int64_t channels, Rng& rng) {
        groups = std::gcd<int64_t>(channels, 8);
        gamma = reg.create(prefix + ".gamma", {channels}, Init::zero, rng);
        std::fill(gamma.data().begin(), gamma.data().end(), T(1));
        beta = reg.create(prefix + ".beta", {channels}, Init::zero, rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return group_norm(x, gamma, beta, groups); }
};

/// Multi-head scaled dot-product over positions. q [B, H*Dh, L] with k/v in
/// the same layout (self) or [B, S, H*Dh] rows (cross, via seq_to_rows).
template <typename T>
Tensor<T> attention_rows(const Tensor<T>& q_rows, const Tensor<T>& k_rows,
                         const Tensor<T>& v_rows) {
    const int64_t Dh = q_rows.dim(2);
    auto scores = matmul(q_rows, transpose_last2(k_rows));
    scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh))));
    return matmul(softmax_lastdim(scores), v_rows);
}

}  // namespace wavediff::nn

#endif  // WAVEDIFF_NN_HPP
