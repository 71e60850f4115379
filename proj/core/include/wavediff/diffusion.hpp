// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_DIFFUSION_HPP
#define WAVEDIFF_DIFFUSION_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wavediff/rng.hpp"

// The three diffusion formulations, generic over any denoiser callable. All
// operations act on flat value buffers so they are shape-agnostic and usable
// both for scalar oracle tests (double) and batched model sampling (float).
namespace wavediff::diffusion {

enum class Prediction { eps, x0, v };

inline const char* to_string(Prediction p) {
    switch (p) {
        case Prediction::eps: return "eps";
        case Prediction::x0: return "x0";
        case Prediction::v: return "v";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// DDPM variance schedule

/// Discrete schedule beta_1..beta_T with cumulative beta_bar_t = prod(1-beta_s).
struct NoiseSchedule {
    std::vector<double> betas;      // index t-1 holds beta_t
    std::vector<double> beta_bars;  // index t-1 holds beta_bar_t

    int steps() const { return static_cast<int>(betas.size()); }

    double beta(int t) const {
        check_t(t);
        return betas[t - 1];
    }

    /// beta_bar_t for t in [0, T]; beta_bar_0 := 1.
    double beta_bar(int t) const {
        if (t == 0) return 1.0;
        check_t(t);
        return beta_bars[t - 1];
    }

    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
        if (T < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        NoiseSchedule s;
        s.betas.resize(T);
        s.beta_bars.resize(T);
        double prod = 1.0;
        for (int t = 0; t < T; ++t) {
            const double beta =
                T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1.0);
            if (!(beta > 0.0 && beta < 1.0)) {
                throw std::invalid_argument("NoiseSchedule: beta out of (0,1)");
            }
            prod *= 1.0 - beta;
            s.betas[t] = beta;
            s.beta_bars[t] = prod;
        }
        return s;
    }

private:
    void check_t(int t) const {
        if (t < 1 || t > steps()) {
            throw std::invalid_argument("NoiseSchedule: t=" + std::to_string(t) +
                                        " outside [1, " + std::to_string(steps()) + "]");
        }
    }
};

/// Coefficients of q(x_{t-1} | x_t, x_0).
struct Posterior {
    double mean_coef_xt = 0.0;
    double mean_coef_x0 = 0.0;
    double variance = 0.0;
};

inline Posterior ddpm_posterior(int t, const NoiseSchedule& s) {
    if (t < 1) throw std::invalid_argument("ddpm_posterior: t must be >= 1");
    const double beta = s.beta(t);
    const double bar_t = s.beta_bar(t);
    const double bar_prev = s.beta_bar(t - 1);
    Posterior p;
    p.mean_coef_xt = std::sqrt(1.0 - beta) * (1.0 - bar_prev) / (1.0 - bar_t);
    p.mean_coef_x0 = std::sqrt(bar_prev) * beta / (1.0 - bar_t);
    p.variance = (1.0 - bar_prev) / (1.0 - bar_t) * beta;
    return p;
}

// ---------------------------------------------------------------------------
// Level coefficients (a, b) with a^2 + b^2 = 1: x = a*x0 + b*eps.
// DDPM uses (sqrt(beta_bar_t), sqrt(1-beta_bar_t)); v-diffusion uses the
// trigonometric pair on the noising semicircle.

inline double alpha_sigma(double sigma) {
    if (sigma < 0.0 || sigma > 1.0) throw std::invalid_argument("sigma outside [0, 1]");
    if (sigma == 0.0) return 1.0;
    if (sigma == 1.0) return 0.0;
    return std::cos(1.5707963267948966 * sigma);
}

inline double beta_sigma(double sigma) {
    if (sigma < 0.0 || sigma > 1.0) throw std::invalid_argument("sigma outside [0, 1]");
    if (sigma == 0.0) return 0.0;
    if (sigma == 1.0) return 1.0;
    return std::sin(1.5707963267948966 * sigma);
}

/// Recover (x0_hat, eps_hat) from a raw prediction at level (a, b).
template <typename T>
void to_x0_eps(Prediction kind, double a, double b, const std::vector<T>& x,
               const std::vector<T>& raw, std::vector<T>& x0_hat, std::vector<T>& eps_hat) {
    if (raw.size() != x.size()) throw std::invalid_argument("prediction/input size mismatch");
    x0_hat.resize(x.size());
    eps_hat.resize(x.size());
    switch (kind) {
        case Prediction::v:
            for (size_t i = 0; i < x.size(); ++i) {
                x0_hat[i] = static_cast<T>(a * x[i] - b * raw[i]);
                eps_hat[i] = static_cast<T>(b * x[i] + a * raw[i]);
            }
            break;
        case Prediction::eps:
            if (a < 1e-12) {
                throw std::invalid_argument("cannot invert eps prediction at a signal level of 0");
            }
            for (size_t i = 0; i < x.size(); ++i) {
                eps_hat[i] = raw[i];
                x0_hat[i] = static_cast<T>((x[i] - b * raw[i]) / a);
            }
            break;
        case Prediction::x0:
            if (b < 1e-12) {
                throw std::invalid_argument("cannot invert x0 prediction at a noise level of 0");
            }
            for (size_t i = 0; i < x.size(); ++i) {
                x0_hat[i] = raw[i];
                eps_hat[i] = static_cast<T>((x[i] - a * raw[i]) / b);
            }
            break;
    }
}

/// Denoiser contract: shape-preserving callable plus its prediction type.
/// `level` is the discrete step t for DDPM or sigma for v-diffusion.
template <typename T>
struct Denoiser {
    Prediction predicts = Prediction::v;
    std::function<std::vector<T>(const std::vector<T>& x, double level)> fn;
};

// ---------------------------------------------------------------------------
// DDPM ops

template <typename T>
std::vector<T> ddpm_noise(const std::vector<T>& x0, int t, const std::vector<T>& eps,
                          const NoiseSchedule& s) {
    if (eps.size() != x0.size()) throw std::invalid_argument("ddpm_noise: eps/x0 size mismatch");
    if (t < 1) throw std::invalid_argument("ddpm_noise: t must be in [1, T]");
    const double bar = s.beta_bar(t);  // validates the upper bound
    const double a = std::sqrt(bar);
    const double b = std::sqrt(1.0 - bar);
    std::vector<T> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
    return out;
}

template <typename T>
double ddpm_loss(const Denoiser<T>& f, const std::vector<T>& x0, int t, const std::vector<T>& eps,
                 const NoiseSchedule& s) {
    if (f.predicts != Prediction::eps) {
        throw std::invalid_argument("ddpm_loss expects an eps-predicting denoiser");
    }
    const auto x_t = ddpm_noise(x0, t, eps, s);
    const auto pred = f.fn(x_t, static_cast<double>(t));
    if (pred.size() != eps.size()) throw std::invalid_argument("ddpm_loss: prediction shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        const double d = static_cast<double>(eps[i]) - static_cast<double>(pred[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(eps.size());
}

template <typename T>
std::vector<T> ddpm_sample_step(const Denoiser<T>& f, const std::vector<T>& x_t, int t,
                                const NoiseSchedule& s, Rng& rng) {
    if (t < 1) throw std::invalid_argument("ddpm_sample_step: t must be >= 1");
    const double beta = s.beta(t);
    const double bar = s.beta_bar(t);
    const double a = std::sqrt(bar);
    const double b = std::sqrt(1.0 - bar);

    const auto raw = f.fn(x_t, static_cast<double>(t));
    std::vector<T> x0_hat, eps_hat;
    to_x0_eps(f.predicts, a, b, x_t, raw, x0_hat, eps_hat);

    // mu = (x_t - beta/sqrt(1-beta_bar) * eps_hat) / sqrt(1-beta)
    const double inv_sqrt = 1.0 / std::sqrt(1.0 - beta);
    const double eps_coef = beta / b;
    std::vector<T> out(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        out[i] = static_cast<T>(inv_sqrt * (x_t[i] - eps_coef * eps_hat[i]));
    }
    if (t >= 2) {  // final step adds no noise
        const double sd = std::sqrt(ddpm_posterior(t, s).variance);
        for (auto& v : out) v = static_cast<T>(v + sd * rng.normal());
    }
    return out;
}

/// Deterministic (eta = 0) DDIM jump t_from -> t_to, t_to in [0, t_from).
template <typename T>
std::vector<T> ddim_sample_step(const Denoiser<T>& f, const std::vector<T>& x_t, int t_from,
                                int t_to, const NoiseSchedule& s) {
    if (t_to >= t_from) throw std::invalid_argument("ddim_sample_step: t_to must be < t_from");
    if (t_to < 0) throw std::invalid_argument("ddim_sample_step: t_to must be >= 0");
    const double bar_from = s.beta_bar(t_from);
    const double a_from = std::sqrt(bar_from);
    const double b_from = std::sqrt(1.0 - bar_from);

    const auto raw = f.fn(x_t, static_cast<double>(t_from));
    std::vector<T> x0_hat, eps_hat;
    to_x0_eps(f.predicts, a_from, b_from, x_t, raw, x0_hat, eps_hat);

    const double bar_to = s.beta_bar(t_to);
    const double a_to = std::sqrt(bar_to);
    const double b_to = std::sqrt(1.0 - bar_to);
    std::vector<T> out(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        out[i] = static_cast<T>(a_to * x0_hat[i] + b_to * eps_hat[i]);
    }
    return out;
}

template <typename T>
std::vector<T> ddpm_sample(const Denoiser<T>& f, const std::vector<T>& noise,
                           const NoiseSchedule& s, Rng& rng) {
    std::vector<T> x = noise;
    for (int t = s.steps(); t >= 1; --t) x = ddpm_sample_step(f, x, t, s, rng);
    return x;
}

// ---------------------------------------------------------------------------
// v-diffusion ops

template <typename T>
std::vector<T> v_noise(const std::vector<T>& x0, double sigma, const std::vector<T>& eps) {
    if (eps.size() != x0.size()) throw std::invalid_argument("v_noise: eps/x0 size mismatch");
    const double a = alpha_sigma(sigma);
    const double b = beta_sigma(sigma);
    std::vector<T> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
    return out;
}

/// True velocity v = alpha*eps - beta*x0 (derivative of the noising path).
template <typename T>
std::vector<T> v_target(const std::vector<T>& x0, double sigma, const std::vector<T>& eps) {
    if (eps.size() != x0.size()) throw std::invalid_argument("v_target: eps/x0 size mismatch");
    const double a = alpha_sigma(sigma);
    const double b = beta_sigma(sigma);
    std::vector<T> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<T>(a * eps[i] - b * x0[i]);
    return out;
}

template <typename T>
std::vector<T> v_denoise_step(const Denoiser<T>& f, const std::vector<T>& x, double sigma_from,
                              double sigma_to) {
    if (!(sigma_to <= sigma_from)) {
        throw std::invalid_argument("v_denoise_step: sigma_to must be <= sigma_from");
    }
    const double a = alpha_sigma(sigma_from);
    const double b = beta_sigma(sigma_from);

    const auto raw = f.fn(x, sigma_from);
    std::vector<T> x0_hat, eps_hat;
    to_x0_eps(f.predicts, a, b, x, raw, x0_hat, eps_hat);

    const double a2 = alpha_sigma(sigma_to);
    const double b2 = beta_sigma(sigma_to);
    std::vector<T> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<T>(a2 * x0_hat[i] + b2 * eps_hat[i]);
    }
    return out;
}

template <typename T>
double v_loss(const Denoiser<T>& f, const std::vector<T>& x0, double sigma,
              const std::vector<T>& eps) {
    if (f.predicts != Prediction::v) {
        throw std::invalid_argument("v_loss expects a v-predicting denoiser");
    }
    const auto x = v_noise(x0, sigma, eps);
    const auto target = v_target(x0, sigma, eps);
    const auto pred = f.fn(x, sigma);
    if (pred.size() != target.size()) throw std::invalid_argument("v_loss: prediction shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(target.size());
}

/// Linear sigma grid 1 -> 0 with num_steps+1 points (endpoints exact).
inline std::vector<double> linear_sigma_schedule(int num_steps) {
    if (num_steps < 1) throw std::invalid_argument("sigma schedule: num_steps must be >= 1");
    std::vector<double> sigmas(num_steps + 1);
    for (int i = 0; i <= num_steps; ++i) {
        sigmas[i] = static_cast<double>(num_steps - i) / static_cast<double>(num_steps);
    }
    return sigmas;
}

/// DDIM-style deterministic sampler over the linear sigma schedule.
template <typename T>
std::vector<T> v_sampler(const Denoiser<T>& f, const std::vector<T>& noise, int num_steps) {
    const auto sigmas = linear_sigma_schedule(num_steps);
    std::vector<T> x = noise;
    for (int i = 0; i < num_steps; ++i) x = v_denoise_step(f, x, sigmas[i], sigmas[i + 1]);
    return x;
}

}  // namespace wavediff::diffusion

#endif  // WAVEDIFF_DIFFUSION_HPP
