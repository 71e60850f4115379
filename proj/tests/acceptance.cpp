// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion. Run all, or a subset
// with --criterion N (repeatable). Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wavediff/config.hpp"
#include "wavediff/diffusion.hpp"
#include "wavediff/fft.hpp"
#include "wavediff/models.hpp"
#include "wavediff/signal.hpp"
#include "wavediff/training.hpp"
#include "wavediff/unet.hpp"
#include "wavediff/wav_io.hpp"

namespace fs = std::filesystem;
using namespace wavediff;
using nn::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
    void note(const std::string& text) {
        if (!detail.empty()) detail += "; ";
        detail += text;
    }
};

// ---------------------------------------------------------------------------
// shared helpers

double spectral_band_fraction(const std::vector<float>& x, int sample_rate, double flo,
                              double fhi) {
    size_t n = 1;
    while (n * 2 <= x.size()) n *= 2;
    std::vector<std::complex<double>> buf(n);
    for (size_t i = 0; i < n; ++i) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));  // reduce leakage
        buf[i] = x[i] * w;
    }
    fft::forward(buf);
    double total = 0.0, in_band = 0.0;
    for (size_t k = 1; k < n / 2; ++k) {  // spectral content: DC excluded
        const double e = std::norm(buf[k]);
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
        total += e;
        if (f >= flo && f <= fhi) in_band += e;
    }
    return total > 0.0 ? in_band / total : 0.0;
}

double dominant_frequency(const std::vector<float>& x, int sample_rate) {
    size_t n = 1;
    while (n * 2 <= x.size()) n *= 2;
    std::vector<std::complex<double>> buf(n);
    for (size_t i = 0; i < n; ++i) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
        buf[i] = x[i] * w;
    }
    fft::forward(buf);
    size_t best = 1;
    for (size_t k = 2; k < n / 2; ++k) {
        if (std::norm(buf[k]) > std::norm(buf[best])) best = k;
    }
    return static_cast<double>(best) * sample_rate / static_cast<double>(n);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db + 1e-30);
}

std::vector<float> keyed_noise(int64_t count, uint64_t seed, uint64_t key) {
    Rng rng = Rng::keyed(seed, key, 0xACCE97);
    std::vector<float> out(count);
    for (auto& v : out) v = static_cast<float>(rng.normal());
    return out;
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

models::ModelConfig toy_generator_config() {
    models::ModelConfig cfg;
    cfg.in_channels = 1;
    cfg.sample_rate = 4000;
    cfg.length = 2048;
    cfg.transform.kind = models::TransformKind::learned;
    cfg.transform.num_filters = 24;
    cfg.transform.window_length = 16;
    cfg.transform.stride = 16;
    cfg.channels = {24, 48};
    cfg.factors = {1, 2};
    cfg.items = {1, 1};
    cfg.attentions = {0, 1};
    cfg.cross_attentions = {0, 0};
    cfg.attention_features = 12;
    cfg.attention_heads = 4;
    cfg.modulation_features = 24;
    return cfg;
}

struct ToyRun {
    std::vector<float> losses;
    double first_mean = 0.0;
    double last_mean = 0.0;
};

template <typename LossFn>
ToyRun run_toy_training(nn::ParamRegistry<float>& params, LossFn&& loss_fn,
                        const train::SynthSpec& spec, int64_t steps, int64_t batch, float lr,
                        uint64_t seed, train::Ema* ema_out = nullptr) {
    train::TrainConfig tcfg;
    tcfg.steps = steps;
    tcfg.batch_size = batch;
    tcfg.adamw.lr = lr;
    tcfg.checkpoint_every = 0;
    tcfg.seed = seed;

    train::AdamW opt(params, tcfg.adamw);
    train::Ema ema(params, tcfg.ema);
    Rng rng(seed);

    train::TrainHooks hooks;
    hooks.params = &params;
    hooks.make_batch = [&](int64_t step) { return train::synth_batch(spec, step, batch); };
    hooks.loss = std::forward<LossFn>(loss_fn);

    const auto result = train::train_loop(hooks, tcfg, "{}", opt, ema, rng);
    ToyRun run;
    run.losses = result.losses;
    const int64_t window = std::min<int64_t>(50, steps);
    for (int64_t i = 0; i < window; ++i) {
        run.first_mean += result.losses[i];
        run.last_mean += result.losses[result.losses.size() - 1 - i];
    }
    run.first_mean /= static_cast<double>(window);
    run.last_mean /= static_cast<double>(window);
    if (ema_out) *ema_out = std::move(ema);
    return run;
}

// ---------------------------------------------------------------------------
// criteria

// 1. v-diffusion trig algebra on 1000 random scalar triples
Check criterion1() {
    Check c;
    Rng rng(101);
    double worst_identity = 0.0, worst_recovery = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x0 = rng.uniform(-2.0, 2.0);
        const double eps = rng.normal();
        const double sigma = rng.uniform();
        const double a = diffusion::alpha_sigma(sigma);
        const double b = diffusion::beta_sigma(sigma);
        worst_identity = std::max(worst_identity, std::abs(a * a + b * b - 1.0));

        const auto x = diffusion::v_noise<double>({x0}, sigma, {eps});
        const auto v = diffusion::v_target<double>({x0}, sigma, {eps});
        std::vector<double> x0_hat, eps_hat;
        diffusion::to_x0_eps(diffusion::Prediction::v, a, b, x, v, x0_hat, eps_hat);
        worst_recovery = std::max(worst_recovery, std::abs(x0_hat[0] - x0));
        worst_recovery = std::max(worst_recovery, std::abs(eps_hat[0] - eps));
    }
    c.require(worst_identity <= 1e-12, "alpha^2+beta^2 off by " + format_float(worst_identity));
    c.require(worst_recovery <= 1e-6, "recovery error " + format_float(worst_recovery));
    c.note("max identity err " + format_float(worst_identity) + ", max recovery err " +
           format_float(worst_recovery));
    return c;
}

// 2. forward-noise Monte-Carlo statistics at t in {T/4, T/2, T}
Check criterion2() {
    Check c;
    const auto sched = diffusion::NoiseSchedule::linear(1000);
    const double x0 = 0.8;
    const int N = 100000;
    Rng rng(808);
    for (int t : {250, 500, 1000}) {
        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < N; ++i) {
            const auto xt = diffusion::ddpm_noise<double>({x0}, t, {rng.normal()}, sched);
            sum += xt[0];
            sum_sq += xt[0] * xt[0];
        }
        const double mean = sum / N;
        const double var = sum_sq / N - mean * mean;
        const double want_mean = std::sqrt(sched.beta_bar(t)) * x0;
        const double want_var = 1.0 - sched.beta_bar(t);
        c.require(std::abs(mean - want_mean) < 0.01,
                  "mean off at t=" + std::to_string(t) + " by " +
                      format_float(std::abs(mean - want_mean)));
        c.require(std::abs(var - want_var) < 0.01 * want_var,
                  "variance off at t=" + std::to_string(t) + " by " +
                      format_float(std::abs(var - want_var) / want_var));
    }
    c.note("N=1e5 at t in {250, 500, 1000}");
    return c;
}

// 3. posterior coefficients vs an independent scalar re-derivation
Check criterion3() {
    Check c;
    const auto sched = diffusion::NoiseSchedule::linear(1000);
    double worst = 0.0;
    for (int t = 1; t <= 1000; ++t) {
        const double beta = sched.beta(t);
        const double bar_t = sched.beta_bar(t);
        const double bar_prev = sched.beta_bar(t - 1);
        const double coef_xt = std::sqrt(1.0 - beta) * (1.0 - bar_prev) / (1.0 - bar_t);
        const double coef_x0 = std::sqrt(bar_prev) * beta / (1.0 - bar_t);
        const double variance = (1.0 - bar_prev) / (1.0 - bar_t) * beta;
        const auto p = diffusion::ddpm_posterior(t, sched);
        worst = std::max({worst, std::abs(p.mean_coef_xt - coef_xt),
                          std::abs(p.mean_coef_x0 - coef_x0), std::abs(p.variance - variance)});
    }
    c.require(worst <= 1e-12, "max coefficient deviation " + format_float(worst));
    c.note("max deviation " + format_float(worst) + " over all t in [1, 1000]");
    return c;
}

// 4. DDIM determinism, step-count invariance with an oracle, exact inversion
Check criterion4() {
    Check c;
    const auto sched = diffusion::NoiseSchedule::linear(1000);
    const std::vector<double> x0 = {0.4, -0.75, 0.1};
    const std::vector<double> eps = {1.1, -0.2, 0.6};
    diffusion::Denoiser<double> oracle{
        diffusion::Prediction::eps, [&](const std::vector<double>& x, double level) {
            const int t = static_cast<int>(level);
            const double a = std::sqrt(sched.beta_bar(t));
            const double b = std::sqrt(1.0 - sched.beta_bar(t));
            std::vector<double> out(x.size());
            for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - a * x0[i]) / b;
            return out;
        }};

    auto chain = [&](int num_steps) {
        std::vector<double> x = eps;  // beta_bar(1000) ~ 0: x_T is (almost) pure noise
        std::vector<int> ts;
        for (int i = 0; i <= num_steps; ++i) {
            ts.push_back(static_cast<int>(std::llround(1000.0 * (num_steps - i) / num_steps)));
        }
        for (size_t i = 0; i + 1 < ts.size(); ++i) {
            x = diffusion::ddim_sample_step(oracle, x, ts[i], ts[i + 1], sched);
        }
        return x;
    };

    const auto a = chain(10);
    const auto b = chain(10);
    for (size_t i = 0; i < a.size(); ++i) {
        c.require(a[i] == b[i], "ddim is not bit-deterministic");
    }
    const auto n20 = chain(20);
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - n20[i]));
    c.require(worst <= 1e-6, "N vs 2N trajectory gap " + format_float(worst));

    // direct x0 inversion of Eq. 5 with the oracle noise
    for (int t : {100, 500, 900}) {
        const auto x_t = diffusion::ddpm_noise(x0, t, eps, sched);
        const auto got = diffusion::ddim_sample_step(oracle, x_t, t, 0, sched);
        for (size_t i = 0; i < x0.size(); ++i) {
            worst = std::max(worst, std::abs(got[i] - x0[i]));
            c.require(std::abs(got[i] - x0[i]) <= 1e-9, "x0 inversion inexact");
        }
    }
    c.note("trajectory gap and inversion err <= " + format_float(worst));
    return c;
}

// 5. signal round trips
Check criterion5() {
    Check c;
    Rng rng(505);
    signal::Waveform w(2, 6000, 4000);
    for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
    const auto spec = signal::stft(w, 1024, 256);
    const auto back = signal::istft(spec, w.samples, w.sample_rate);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.data.size(); ++i) {
        num += (back.data[i] - w.data[i]) * (back.data[i] - w.data[i]);
        den += w.data[i] * w.data[i];
    }
    const double rel = std::sqrt(num / den);
    c.require(rel < 1e-5, "istft(stft(x)) error " + format_float(rel));

    for (int p : {2, 4, 8}) {
        const auto pw = signal::unpatch(signal::patch(w, p));
        for (size_t i = 0; i < w.data.size(); ++i) {
            c.require(pw.data[i] == w.data[i], "patch round trip not bit-exact");
        }
    }

    double mel_worst = 0.0;
    for (double f : {10.0, 440.0, 20000.0}) {
        const double back_f = signal::mel_to_hz(signal::hz_to_mel(f));
        mel_worst = std::max(mel_worst, std::abs(back_f - f) / f);
    }
    c.require(mel_worst < 1e-9, "mel inverse error " + format_float(mel_worst));
    c.note("istft rel err " + format_float(rel) + ", mel inverse rel err " +
           format_float(mel_worst));
    return c;
}

// 6. finite-difference gradient suite (64-bit)
Check criterion6() {
    Check c;
    auto fd_max = [](const std::function<Tensor<double>()>& loss_fn,
                     const nn::ParamRegistry<double>& reg, int samples, uint64_t pick_seed) {
        for (const auto& [_, p] : reg.items()) p.node()->grad.assign(p.data().size(), 0.0);
        auto loss = loss_fn();
        nn::backward(loss);
        Rng rng(pick_seed);
        double worst = 0.0;
        for (int s = 0; s < samples; ++s) {
            const auto& [name, p] = reg.items()[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(reg.size()) - 1))];
            auto& value = p.node()->value;
            const auto i =
                static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(value.size()) - 1));
            const double analytic = p.node()->grad.empty() ? 0.0 : p.node()->grad[i];
            const double keep = value[i];
            const double h = 1e-4;
            value[i] = keep + h;
            const double up = loss_fn().item();
            value[i] = keep - h;
            const double down = loss_fn().item();
            value[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(analytic - fd) / (std::abs(analytic) + 1e-8));
        }
        return worst;
    };

    auto nudge_zeros = [](nn::ParamRegistry<double>& reg, uint64_t seed) {
        Rng rng(seed);
        for (const auto& [_, p] : reg.items()) {
            bool all_zero = !p.data().empty();
            for (double v : p.data()) all_zero = all_zero && v == 0.0;
            if (all_zero) {
                for (auto& v : p.node()->value) v = rng.normal() * 0.1;
            }
        }
    };

    Rng data_rng(606);
    double worst_all = 0.0;
    auto run_item = [&](const char* label, auto&& make_item, unet::Conditioning<double> cond) {
        nn::ParamRegistry<double> reg;
        Rng rng(607);
        auto item = make_item(reg, rng);
        nudge_zeros(reg, 608);
        auto x = Tensor<double>::randn({2, 6, 8}, data_rng);
        auto target = Tensor<double>::randn({2, 6, 8}, data_rng);
        const double worst = fd_max(
            [&] { return nn::mse(item->forward(x, cond, 0), target); }, reg, 50, 609);
        worst_all = std::max(worst_all, worst);
        c.require(worst < 1e-3, std::string(label) + " gradient err " + format_float(worst));
    };

    unet::Conditioning<double> plain;
    run_item("resnet", [](auto& reg, auto& rng) {
        return std::make_unique<unet::ResnetItem<double>>(reg, "i", 6, rng);
    }, plain);

    unet::Conditioning<double> feat;
    feat.features = Tensor<double>::randn({2, 6}, data_rng);
    run_item("modulation", [](auto& reg, auto& rng) {
        return std::make_unique<unet::ModulationItem<double>>(reg, "i", 6, 6, rng);
    }, feat);

    run_item("attention", [](auto& reg, auto& rng) {
        return std::make_unique<unet::AttentionItem<double>>(reg, "i", 6, 2, 3, rng);
    }, plain);

    unet::Conditioning<double> emb;
    emb.embedding = Tensor<double>::randn({2, 3, 5}, data_rng);
    run_item("cross-attention", [](auto& reg, auto& rng) {
        return std::make_unique<unet::CrossAttentionItem<double>>(reg, "i", 6, 5, 2, 3, rng);
    }, emb);

    run_item("feed-forward", [](auto& reg, auto& rng) {
        return std::make_unique<unet::FeedForwardItem<double>>(reg, "i", 6, rng);
    }, plain);

    unet::Conditioning<double> inj;
    inj.inject[0] = Tensor<double>::randn({2, 3, 8}, data_rng);
    run_item("inject", [](auto& reg, auto& rng) {
        return std::make_unique<unet::InjectItem<double>>(reg, "i", 6, 3, rng);
    }, inj);

    // composed 2-level net, 20 random parameters
    {
        unet::UNetConfig cfg;
        cfg.in_channels = 2;
        cfg.channels = {4, 6};
        cfg.factors = {1, 2};
        cfg.items = {1, 1};
        cfg.attentions = {0, 1};
        cfg.cross_attentions = {0, 0};
        cfg.attention_features = 3;
        cfg.attention_heads = 2;
        cfg.modulation_features = 4;
        cfg.training_length = 16;
        nn::ParamRegistry<double> reg;
        Rng rng(610);
        auto net = unet::build_unet(cfg, reg, rng);
        nudge_zeros(reg, 611);
        auto x = Tensor<double>::randn({2, 2, 16}, data_rng);
        auto target = Tensor<double>::randn({2, 2, 16}, data_rng);
        unet::Conditioning<double> cond;
        cond.features = Tensor<double>::randn({2, 4}, data_rng);
        const double worst =
            fd_max([&] { return nn::mse(net.forward(x, cond), target); }, reg, 20, 612);
        worst_all = std::max(worst_all, worst);
        c.require(worst < 1e-3, "composed net gradient err " + format_float(worst));
    }
    c.note("max rel err " + format_float(worst_all));
    return c;
}

// 7. classifier-free guidance algebra
Check criterion7() {
    Check c;
    unet::UNetConfig cfg;
    cfg.in_channels = 2;
    cfg.channels = {4};
    cfg.factors = {1};
    cfg.items = {1};
    cfg.attentions = {0};
    cfg.cross_attentions = {1};
    cfg.attention_features = 3;
    cfg.attention_heads = 2;
    cfg.modulation_features = 4;
    cfg.embedding_features = 5;
    cfg.training_length = 8;

    nn::ParamRegistry<double> reg;
    Rng rng(707);
    auto net = unet::build_unet(cfg, reg, rng);
    unet::TextConditioner<double> text(reg, "text", 64, 6, 5, rng);
    Rng nudge(708);
    for (const auto& [_, p] : reg.items()) {
        bool all_zero = !p.data().empty();
        for (double v : p.data()) all_zero = all_zero && v == 0.0;
        if (all_zero) {
            for (auto& v : p.node()->value) v = nudge.normal() * 0.1;
        }
    }

    Rng data(709);
    auto x = Tensor<double>::randn({2, 2, 8}, data);
    unet::Conditioning<double> cond, masked;
    cond.features = Tensor<double>::randn({2, 4}, data);
    masked.features = cond.features;
    cond.embedding = text.embed({"low tone", "high tone"});
    masked.embedding = text.masked_batch(2);

    const auto y_m = net.forward(x, masked);
    const auto y_e = net.forward(x, cond);
    const auto at0 = unet::cfg_forward(net, x, cond, masked, 0.0);
    const auto at1 = unet::cfg_forward(net, x, cond, masked, 1.0);
    for (size_t i = 0; i < y_m.data().size(); ++i) {
        c.require(at0.data()[i] == y_m.data()[i], "lambda=0 not bit-exact");
        c.require(at1.data()[i] == y_e.data()[i], "lambda=1 not bit-exact");
    }
    const auto at5 = unet::cfg_forward(net, x, cond, masked, 5.0);
    double worst = 0.0;
    for (size_t i = 0; i < y_m.data().size(); ++i) {
        const double want = y_m.data()[i] + (y_e.data()[i] - y_m.data()[i]) * 5.0;
        worst = std::max(worst, std::abs(at5.data()[i] - want));
    }
    c.require(worst <= 1e-12, "lambda=5 deviates by " + format_float(worst));
    c.note("lambda=5 max deviation " + format_float(worst));
    return c;
}

// 8. toy unconditional training
Check criterion8(uint64_t seed) {
    Check c;
    auto cfg = toy_generator_config();
    models::DiffusionModel model(cfg, seed);
    c.note("params " + std::to_string(model.parameters().total_params()));
    c.require(model.parameters().total_params() > 50000 &&
                  model.parameters().total_params() < 200000,
              "parameter count far from the ~100k toy target");

    train::SynthSpec spec;
    spec.sample_rate = 4000;
    spec.length = 2048;
    spec.seed = seed + 1;
    spec.tones_min = 1;
    spec.tones_max = 2;
    spec.freq_min = 300.0;
    spec.freq_max = 700.0;
    spec.amp_min = 0.3;
    spec.amp_max = 0.8;

    train::Ema ema;
    const auto run = run_toy_training(
        model.parameters(),
        [&](const models::Batch& b, Rng& r) { return model.training_loss(b, r); }, spec, 2000, 8,
        1e-3f, seed + 2, &ema);

    c.require(run.last_mean <= 0.5 * run.first_mean,
              "final-50 mean " + format_float(run.last_mean) + " vs first-50 mean " +
                  format_float(run.first_mean));
    c.note("loss " + format_float(run.first_mean) + " -> " + format_float(run.last_mean));

    // sample with the EMA weights and measure in-band energy
    ema.swap_into(model.parameters());
    double in_band = 0.0;
    const int num_samples = 4;
    for (int i = 0; i < num_samples; ++i) {
        models::SampleOptions opts;
        opts.num_steps = 50;
        const auto out = model.sample(keyed_noise(2048, seed + 3, i), 1, opts);
        in_band += spectral_band_fraction(out, 4000, 300.0 * 0.95, 700.0 * 1.05);
    }
    ema.swap_into(model.parameters());
    in_band /= num_samples;
    c.require(in_band >= 0.8, "in-band energy fraction " + format_float(in_band));
    c.note("in-band energy " + format_float(in_band));
    return c;
}

// 9. toy text-conditional training with CFG
Check criterion9(uint64_t seed) {
    Check c;
    auto cfg = toy_generator_config();
    cfg.text.enabled = true;
    cfg.text.vocab_size = 256;
    cfg.text.max_length = 8;
    cfg.text.embedding_features = 16;
    cfg.text.cfg_mask_proba = 0.1;
    cfg.cross_attentions = {0, 1};
    models::DiffusionModel model(cfg, seed);

    train::SynthSpec spec;
    spec.sample_rate = 4000;
    spec.length = 2048;
    spec.seed = seed + 1;
    spec.kind = "classes";
    spec.amp_min = 0.4;
    spec.amp_max = 0.8;
    spec.classes = {{"sine low", 300.0, 400.0}, {"sine high", 900.0, 1000.0}};

    train::Ema ema;
    const auto run = run_toy_training(
        model.parameters(),
        [&](const models::Batch& b, Rng& r) { return model.training_loss(b, r); }, spec, 2200, 8,
        1e-3f, seed + 2, &ema);
    c.note("loss " + format_float(run.first_mean) + " -> " + format_float(run.last_mean));

    ema.swap_into(model.parameters());
    int low_correct = 0, high_correct = 0;
    for (int i = 0; i < 10; ++i) {
        models::SampleOptions opts;
        opts.num_steps = 50;
        opts.use_text = true;
        opts.embedding_scale = 5.0;

        opts.text = "sine low";
        auto out = model.sample(keyed_noise(2048, seed + 4, i), 1, opts);
        const double f_low = dominant_frequency(out, 4000);
        if (f_low >= 250.0 && f_low <= 450.0) ++low_correct;

        opts.text = "sine high";
        out = model.sample(keyed_noise(2048, seed + 4, 100 + i), 1, opts);
        const double f_high = dominant_frequency(out, 4000);
        if (f_high >= 850.0 && f_high <= 1050.0) ++high_correct;
    }
    ema.swap_into(model.parameters());
    c.require(low_correct >= 8, "'sine low' correct for only " + std::to_string(low_correct) +
                                    "/10 seeds");
    c.require(high_correct >= 8, "'sine high' correct for only " + std::to_string(high_correct) +
                                     "/10 seeds");
    c.note("low " + std::to_string(low_correct) + "/10, high " + std::to_string(high_correct) +
           "/10");
    return c;
}

// 10. toy vocoder
Check criterion10(uint64_t seed) {
    Check c;
    models::VocoderConfig vcfg;
    vcfg.mel.num_fft = 1024;
    vcfg.mel.hop = 256;
    vcfg.mel.num_mels = 80;
    vcfg.base = toy_generator_config();
    models::VocoderModel model(vcfg, seed);

    train::SynthSpec spec;
    spec.sample_rate = 4000;
    spec.length = 2048;
    spec.seed = seed + 1;
    spec.amp_min = 0.5;
    spec.amp_max = 0.9;
    spec.freq_min = 250.0;
    spec.freq_max = 1750.0;
    for (int k = 2; k <= 14; ++k) spec.tone_grid.push_back(125.0 * k);

    train::Ema ema;
    const auto run = run_toy_training(
        model.parameters(),
        [&](const models::Batch& b, Rng& r) { return model.training_loss(b, r); }, spec, 2500, 8,
        1e-3f, seed + 2, &ema);
    c.require(run.last_mean <= 0.5 * run.first_mean,
              "loss fell only " + format_float(run.first_mean) + " -> " +
                  format_float(run.last_mean));
    c.note("loss " + format_float(run.first_mean) + " -> " + format_float(run.last_mean));

    ema.swap_into(model.parameters());
    const double bin_hz = 4000.0 / 1024.0;  // one bin of the mel-analysis FFT
    int correct = 0;
    for (int i = 0; i < 10; ++i) {
        const auto tone = train::synth_sample(spec, 1000000 + i);
        const auto mel = signal::mel_spectrogram(tone.wave, vcfg.mel);
        std::vector<float> mel_buf(mel.data.size());
        for (size_t j = 0; j < mel.data.size(); ++j) mel_buf[j] = static_cast<float>(mel.data[j]);
        const auto out =
            model.sample(mel_buf, 1, mel.num_frames, 50, keyed_noise(2048, seed + 3, i));
        const double f_src = dominant_frequency(
            std::vector<float>(tone.wave.data.begin(), tone.wave.data.end()), 4000);
        const double f_out = dominant_frequency(out, 4000);
        if (std::abs(f_out - f_src) <= bin_hz) ++correct;
    }
    ema.swap_into(model.parameters());
    c.require(correct >= 9, "tone recovered within 1 bin for only " + std::to_string(correct) +
                                "/10 tones");
    c.note("tones " + std::to_string(correct) + "/10 within " + format_float(bin_hz) + " Hz");
    return c;
}

// 11. toy 4x upsampler
Check criterion11(uint64_t seed) {
    Check c;
    models::UpsamplerConfig ucfg;
    ucfg.rate_factor = 4;
    ucfg.base = toy_generator_config();
    models::UpsamplerModel model(ucfg, seed);

    train::SynthSpec spec;
    spec.sample_rate = 4000;
    spec.length = 2048;
    spec.seed = seed + 1;
    spec.tones_min = 1;
    spec.tones_max = 2;
    spec.freq_min = 100.0;  // band-limited: content survives 4x decimation
    spec.freq_max = 450.0;
    spec.amp_min = 0.4;
    spec.amp_max = 0.8;

    train::Ema ema;
    const auto run = run_toy_training(
        model.parameters(),
        [&](const models::Batch& b, Rng& r) { return model.training_loss(b, r); }, spec, 1500, 8,
        1e-3f, seed + 2, &ema);
    c.note("loss " + format_float(run.first_mean) + " -> " + format_float(run.last_mean));

    ema.swap_into(model.parameters());
    double worst = 1.0;
    for (int i = 0; i < 10; ++i) {
        const auto clip = train::synth_sample(spec, 2000000 + i);
        const auto low = models::decimate(clip.wave.data, 1, 2048, 4);
        std::vector<float> x_low(low.size());
        for (size_t j = 0; j < low.size(); ++j) x_low[j] = static_cast<float>(low[j]);

        const auto high = model.sample(x_low, 1, 50, keyed_noise(2048, seed + 3, i));
        std::vector<double> high_d(high.begin(), high.end());
        const auto re_low = models::decimate(high_d, 1, 2048, 4);
        worst = std::min(worst, pearson(re_low, low));
    }
    ema.swap_into(model.parameters());
    c.require(worst > 0.9, "lowest correlation " + format_float(worst));
    c.note("min correlation over 10 clips " + format_float(worst));
    return c;
}

// 12. the shape/context validator arithmetic
Check criterion12() {
    Check c;
    unet::UNetConfig cfg;
    cfg.in_channels = 8;
    cfg.channels = {16, 16, 32, 32, 64, 64};
    cfg.factors = {1, 2, 2, 2, 2, 2};
    cfg.items = {2, 2, 2, 2, 4, 4};
    cfg.attentions = {0, 0, 0, 0, 1, 1};
    cfg.cross_attentions = {0, 0, 0, 0, 0, 0};
    cfg.attention_features = 8;
    cfg.attention_heads = 4;
    cfg.modulation_features = 16;
    cfg.training_length = (1 << 19) / (1 << 6);  // waveform 2^19 through a 2^6 transform

    c.require(unet::attention_context_at(cfg, 4) == 1024, "first-attention context != 2^10");
    try {
        unet::validate_config(cfg);
    } catch (const std::exception& e) {
        c.require(false, std::string("valid config rejected: ") + e.what());
    }

    auto bad = cfg;
    bad.attentions[1] = 1;  // context 8192 > 2048
    bool rejected = false;
    std::string message;
    try {
        unet::validate_config(bad);
    } catch (const std::invalid_argument& e) {
        rejected = true;
        message = e.what();
    }
    c.require(rejected, "violating config accepted");
    c.require(message.find("level 1") != std::string::npos, "rejection does not name the level");

    // the same arithmetic guards model construction
    bool build_rejected = false;
    try {
        nn::ParamRegistry<float> reg;
        Rng rng(1);
        (void)unet::build_unet(bad, reg, rng);
    } catch (const std::invalid_argument&) {
        build_rejected = true;
    }
    c.require(build_rejected, "build accepted a violating config");
    c.note("context(level 4) = 1024; violating config rejected at build");
    return c;
}

// 13. reproducibility: checkpoints, WAVs, resume
Check criterion13() {
    Check c;
    const auto dir = fs::temp_directory_path() / "wavediff_acceptance_repro";
    fs::remove_all(dir);
    fs::create_directories(dir);

    models::ModelConfig mcfg;
    mcfg.in_channels = 1;
    mcfg.sample_rate = 4000;
    mcfg.length = 512;
    mcfg.transform.kind = models::TransformKind::learned;
    mcfg.transform.num_filters = 8;
    mcfg.transform.window_length = 8;
    mcfg.transform.stride = 8;
    mcfg.channels = {8, 12};
    mcfg.factors = {1, 2};
    mcfg.items = {1, 1};
    mcfg.attentions = {0, 1};
    mcfg.attention_features = 4;
    mcfg.attention_heads = 2;
    mcfg.modulation_features = 8;

    train::SynthSpec spec;
    spec.sample_rate = 4000;
    spec.length = 512;
    spec.seed = 5;

    auto run_training = [&](const std::string& run_dir, int64_t total, int64_t start,
                            models::DiffusionModel& model, train::AdamW& opt, train::Ema& ema,
                            Rng& rng) {
        train::TrainConfig tcfg;
        tcfg.steps = total;
        tcfg.batch_size = 2;
        tcfg.checkpoint_every = 15;
        tcfg.seed = 77;
        tcfg.run_dir = run_dir;
        train::TrainHooks hooks;
        hooks.params = &model.parameters();
        hooks.make_batch = [&](int64_t step) { return train::synth_batch(spec, step, 2); };
        hooks.loss = [&](const models::Batch& b, Rng& r) { return model.training_loss(b, r); };
        return train::train_loop(hooks, tcfg, "{\"toy\":13}", opt, ema, rng, start);
    };

    auto read_bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };

    // (seed, config) -> byte-identical checkpoints across two fresh runs
    std::vector<float> losses_a;
    {
        models::DiffusionModel model(mcfg, 99);
        train::AdamW opt(model.parameters());
        train::Ema ema(model.parameters());
        Rng rng(77);
        losses_a = run_training((dir / "a").string(), 30, 0, model, opt, ema, rng).losses;
    }
    {
        models::DiffusionModel model(mcfg, 99);
        train::AdamW opt(model.parameters());
        train::Ema ema(model.parameters());
        Rng rng(77);
        run_training((dir / "b").string(), 30, 0, model, opt, ema, rng);
    }
    c.require(read_bytes(dir / "a" / "checkpoints" / "step-30.wdf") ==
                  read_bytes(dir / "b" / "checkpoints" / "step-30.wdf"),
              "two identical runs produced different checkpoints");

    // save/load/resume reproduces the loss trajectory bit-exactly
    {
        models::DiffusionModel model(mcfg, 99);
        train::AdamW opt(model.parameters());
        train::Ema ema(model.parameters());
        Rng rng(77);
        const auto first = run_training((dir / "c").string(), 15, 0, model, opt, ema, rng);

        models::DiffusionModel fresh(mcfg, 1234);  // different init, fully restored below
        train::AdamW opt2(fresh.parameters());
        train::Ema ema2(fresh.parameters());
        const auto ckpt = train::load_checkpoint(first.last_checkpoint);
        train::restore_state(ckpt, fresh.parameters(), opt2, ema2);
        Rng rng2(0);
        rng2.set_state(ckpt.rng_state);
        const auto resumed =
            run_training((dir / "c").string(), 30, ckpt.step, fresh, opt2, ema2, rng2);

        c.require(first.losses.size() == 15 && resumed.losses.size() == 15, "wrong step counts");
        for (size_t i = 0; i < 15; ++i) {
            c.require(first.losses[i] == losses_a[i], "pre-split trajectory differs");
            c.require(resumed.losses[i] == losses_a[15 + i], "resumed trajectory differs");
        }
        c.require(read_bytes(dir / "a" / "checkpoints" / "step-30.wdf") ==
                      read_bytes(dir / "c" / "checkpoints" / "step-30.wdf"),
                  "resumed checkpoint differs from the uninterrupted one");
    }

    // (seed, config) -> byte-identical WAVs
    {
        models::DiffusionModel model(mcfg, 99);
        models::SampleOptions opts;
        opts.num_steps = 5;
        const auto noise = keyed_noise(512, 13, 0);
        const auto s1 = model.sample(noise, 1, opts);
        const auto s2 = model.sample(noise, 1, opts);
        c.require(s1 == s2, "sampling is not deterministic");

        signal::Waveform w(1, 512, 4000);
        for (size_t i = 0; i < s1.size(); ++i) w.data[i] = std::clamp<double>(s1[i], -1.0, 1.0);
        wav::write((dir / "s1.wav").string(), w);
        wav::write((dir / "s2.wav").string(), w);
        c.require(read_bytes(dir / "s1.wav") == read_bytes(dir / "s2.wav"),
                  "wav export not deterministic");
    }

    fs::remove_all(dir);
    c.note("checkpoints, resume trajectory, and WAVs byte-identical");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    uint64_t seed = 424242;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only.push_back(std::atoi(argv[++i]));
        } else if (std::strcmp(argv[i], "--seed") == 0 && i + 1 < argc) {
            seed = std::strtoull(argv[++i], nullptr, 10);
        }
    }

    struct Entry {
        int id;
        const char* name;
        double budget_s;  // stated runtime bound; 0 = none
        std::function<Check()> run;
    };
    const std::vector<Entry> entries = {
        {1, "v-diffusion algebra", 1.0, criterion1},
        {2, "forward-noise statistics", 10.0, criterion2},
        {3, "ddpm posterior coefficients", 0.0, criterion3},
        {4, "ddim determinism and inversion", 0.0, criterion4},
        {5, "signal round trips", 5.0, criterion5},
        {6, "finite-difference gradients", 0.0, criterion6},
        {7, "classifier-free guidance", 0.0, criterion7},
        {8, "toy unconditional training", 900.0, [&] { return criterion8(seed); }},
        {9, "toy text-conditional training", 0.0, [&] { return criterion9(seed); }},
        {10, "toy vocoder", 0.0, [&] { return criterion10(seed); }},
        {11, "toy 4x upsampler", 0.0, [&] { return criterion11(seed); }},
        {12, "shape/context validator", 0.0, criterion12},
        {13, "reproducibility", 0.0, criterion13},
    };

    int failures = 0;
    for (const auto& entry : entries) {
        if (!only.empty() && std::find(only.begin(), only.end(), entry.id) == only.end()) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Check result;
        try {
            result = entry.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (entry.budget_s > 0.0 && elapsed > entry.budget_s) {
            result.ok = false;
            result.detail += (result.detail.empty() ? "" : "; ") + std::string("over budget ") +
                             format_float(entry.budget_s) + " s";
        }
        std::printf("[%s] criterion %2d: %s (%.1f s)%s%s\n", result.ok ? "PASS" : "FAIL",
                    entry.id, entry.name, elapsed, result.detail.empty() ? "" : " — ",
                    result.detail.c_str());
        std::fflush(stdout);
        if (!result.ok) ++failures;
    }
    return failures;
}
