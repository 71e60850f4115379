// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace wavediff::train {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(const nn::ParamRegistry<float>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& [_, p] : params.items()) {
        m_.emplace_back(p.data().size(), 0.0f);
        v_.emplace_back(p.data().size(), 0.0f);
    }
}

void AdamW::step(nn::ParamRegistry<float>& params) {
    if (m_.size() != params.size()) throw std::logic_error("AdamW: parameter set changed");
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& [name, p] = params.items()[pi];
        auto& value = p.node()->value;
        auto& grad = p.node()->grad;
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < value.size(); ++i) {
            const float g = grad[i];
            if (!std::isfinite(g)) {
                throw std::runtime_error("AdamW: non-finite gradient in tensor '" + name + "'");
            }
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * value[i];
            value[i] = static_cast<float>(value[i] - cfg_.lr * update);
        }
    }
}

// ---------------------------------------------------------------------------
// EMA

Ema::Ema(const nn::ParamRegistry<float>& params, EmaConfig cfg) : cfg_(cfg) {
    for (const auto& [_, p] : params.items()) shadow_.push_back(p.data());
}

double Ema::effective_beta(int64_t step, const EmaConfig& cfg) {
    if (step < 1) throw std::invalid_argument("ema: step must be >= 1");
    const double warm = std::pow(1.0 - 1.0 / static_cast<double>(step + 1), cfg.power);
    return std::min(cfg.beta_max, warm);
}

void Ema::update(const nn::ParamRegistry<float>& params, int64_t step) {
    if (shadow_.size() != params.size()) throw std::logic_error("ema: parameter set changed");
    const double beta = effective_beta(step, cfg_);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& value = params.items()[pi].second.data();
        auto& s = shadow_[pi];
        if (s.size() != value.size()) throw std::logic_error("ema: shape changed");
        for (size_t i = 0; i < s.size(); ++i) {
            s[i] = static_cast<float>(beta * s[i] + (1.0 - beta) * value[i]);
        }
    }
}

void Ema::swap_into(nn::ParamRegistry<float>& params) {
    if (shadow_.size() != params.size()) throw std::logic_error("ema: parameter set changed");
    for (size_t pi = 0; pi < params.size(); ++pi) {
        params.items()[pi].second.node()->value.swap(shadow_[pi]);
    }
}

double clip_global_norm(nn::ParamRegistry<float>& params, double max_norm) {
    double total = 0.0;
    for (const auto& [_, p] : params.items()) {
        for (float g : p.node()->grad) total += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(total);
    if (norm > max_norm && norm > 0.0) {
        const auto scale = static_cast<float>(max_norm / norm);
        for (const auto& [_, p] : params.items()) {
            for (auto& g : p.node()->grad) g *= scale;
        }
    }
    return norm;
}

// ---------------------------------------------------------------------------
// synthetic data

SynthSample synth_sample(const SynthSpec& spec, int64_t index) {
    if (index < 0) throw std::invalid_argument("synth_sample: index must be >= 0");
    Rng rng = Rng::keyed(spec.seed, static_cast<uint64_t>(index), 0xDA7A);

    SynthSample out;
    out.wave = signal::Waveform(1, spec.length, spec.sample_rate);

    auto snap = [&](double f) {
        if (spec.tone_grid.empty()) return f;
        double best = spec.tone_grid.front();
        for (double g : spec.tone_grid) {
            if (std::abs(g - f) < std::abs(best - f)) best = g;
        }
        return best;
    };

    if (spec.kind == "chirp") {
        const bool up = index % 2 == 0;
        const double f0 = up ? spec.freq_min : spec.freq_max;
        const double f1 = up ? spec.freq_max : spec.freq_min;
        const double amp = rng.uniform(spec.amp_min, spec.amp_max);
        const double phase = rng.uniform(0.0, kTwoPi);
        const double T = static_cast<double>(spec.length);
        for (int64_t t = 0; t < spec.length; ++t) {
            const double u = static_cast<double>(t) / T;
            const double inst = f0 + (f1 - f0) * u * 0.5;  // integrated sweep
            out.wave.at(0, t) =
                amp * std::sin(phase + kTwoPi * inst * static_cast<double>(t) / spec.sample_rate);
        }
        out.label = up ? "chirp up" : "chirp down";
        return out;
    }

    double lo = spec.freq_min, hi = spec.freq_max;
    std::string class_label;
    if (spec.kind == "classes") {
        if (spec.classes.empty()) throw std::invalid_argument("synth_sample: no classes given");
        const auto& cls = spec.classes[static_cast<size_t>(index) % spec.classes.size()];
        lo = cls.freq_min;
        hi = cls.freq_max;
        class_label = cls.label;
    }

    const int tones = static_cast<int>(rng.uniform_int(spec.tones_min, spec.tones_max));
    std::vector<double> freqs(tones), amps(tones), phases(tones);
    double amp_total = 0.0;
    for (int k = 0; k < tones; ++k) {
        freqs[k] = snap(rng.uniform(lo, hi));
        amps[k] = rng.uniform(spec.amp_min, spec.amp_max);
        phases[k] = rng.uniform(0.0, kTwoPi);
        amp_total += amps[k];
    }
    if (amp_total > 0.95) {  // keep the mixture inside [-1, 1]
        for (auto& a : amps) a *= 0.95 / amp_total;
    }
    for (int64_t t = 0; t < spec.length; ++t) {
        double acc = 0.0;
        for (int k = 0; k < tones; ++k) {
            acc += amps[k] * std::sin(phases[k] + kTwoPi * freqs[k] * t / spec.sample_rate);
        }
        out.wave.at(0, t) = acc;
    }

    if (!class_label.empty()) {
        out.label = class_label;
    } else if (spec.labeled) {
        int loudest = 0;
        for (int k = 1; k < tones; ++k) {
            if (amps[k] > amps[loudest]) loudest = k;
        }
        out.label = "sine " + std::to_string(static_cast<int>(std::llround(freqs[loudest])));
    }
    return out;
}

models::Batch synth_batch(const SynthSpec& spec, int64_t step, int64_t batch_size) {
    models::Batch batch;
    batch.batch = batch_size;
    batch.samples.resize(batch_size * spec.length);
    const bool labeled = spec.labeled || spec.kind == "classes" || spec.kind == "chirp";
    for (int64_t b = 0; b < batch_size; ++b) {
        const auto sample = synth_sample(spec, (step - 1) * batch_size + b);
        for (int64_t t = 0; t < spec.length; ++t) {
            batch.samples[b * spec.length + t] = static_cast<float>(sample.wave.at(0, t));
        }
        if (labeled) batch.texts.push_back(sample.label);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// training loop

TrainResult train_loop(const TrainHooks& hooks, const TrainConfig& cfg,
                       const std::string& config_json, AdamW& opt, Ema& ema, Rng& rng,
                       int64_t start_step) {
    namespace fs = std::filesystem;
    if (!hooks.make_batch || !hooks.loss || !hooks.params) {
        throw std::invalid_argument("train_loop: incomplete hooks");
    }

    TrainResult result;
    std::FILE* metrics = nullptr;
    std::string metrics_path;
    if (!cfg.run_dir.empty()) {
        fs::create_directories(cfg.run_dir);
        fs::create_directories(fs::path(cfg.run_dir) / "checkpoints");
        metrics_path = (fs::path(cfg.run_dir) / "metrics.csv").string();
        const bool fresh = start_step == 0 || !fs::exists(metrics_path);
        metrics = std::fopen(metrics_path.c_str(), fresh ? "w" : "a");
        if (!metrics) throw std::runtime_error("train_loop: cannot open " + metrics_path);
        if (fresh) std::fprintf(metrics, "step,loss,beta_eff,wall_ms\n");
    }

    auto write_checkpoint = [&](int64_t step) {
        if (cfg.run_dir.empty()) return std::string();
        const auto path =
            (fs::path(cfg.run_dir) / "checkpoints" / ("step-" + std::to_string(step) + ".wdf"))
                .string();
        save_checkpoint(path,
                        bundle_state(*hooks.params, opt, ema, config_json, step, cfg.seed,
                                     rng.state()));
        return path;
    };

    for (int64_t step = start_step + 1; step <= cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();

        auto batch = hooks.make_batch(step);
        hooks.params->zero_grad();
        auto loss = hooks.loss(batch, rng);
        const float loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
            if (metrics) std::fclose(metrics);
            throw NanAbortError("train_loop: non-finite loss at step " + std::to_string(step),
                                result.last_checkpoint);
        }
        nn::backward(loss);
        clip_global_norm(*hooks.params, cfg.clip_norm);
        opt.step(*hooks.params);
        ema.update(*hooks.params, step);

        const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        if (metrics) {
            std::fprintf(metrics, "%lld,%.9g,%.9g,%lld\n", static_cast<long long>(step),
                         static_cast<double>(loss_value),
                         Ema::effective_beta(step, ema.config()),
                         static_cast<long long>(wall_ms));
            std::fflush(metrics);
        }
        result.losses.push_back(loss_value);
        ++result.steps_done;

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
            result.last_checkpoint = write_checkpoint(step);
        }
    }

    if (cfg.steps > start_step) {
        const auto final_path = write_checkpoint(cfg.steps);
        if (!final_path.empty()) result.last_checkpoint = final_path;
    }
    if (metrics) std::fclose(metrics);
    return result;
}

}  // namespace wavediff::train
