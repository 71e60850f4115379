// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_TRAINING_HPP
#define WAVEDIFF_TRAINING_HPP

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wavediff/models.hpp"
#include "wavediff/nn.hpp"
#include "wavediff/rng.hpp"
#include "wavediff/signal.hpp"

namespace wavediff::train {

// ---------------------------------------------------------------------------
// optimization

struct AdamWConfig {
    float lr = 1e-4f;
    float beta1 = 0.95f;
    float beta2 = 0.999f;
    float eps = 1e-6f;
    float weight_decay = 1e-3f;
};

/// Decoupled-weight-decay adaptive optimizer with bias correction.
class AdamW {
public:
    AdamW() = default;
    AdamW(const nn::ParamRegistry<float>& params, AdamWConfig cfg = {});

    /// Applies one update from the accumulated gradients. A non-finite
    /// gradient aborts with the offending tensor's name.
    void step(nn::ParamRegistry<float>& params);

    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }
    std::vector<std::vector<float>>& moments1() { return m_; }
    std::vector<std::vector<float>>& moments2() { return v_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    int64_t step_ = 0;
};

struct EmaConfig {
    double beta_max = 0.995;
    double power = 0.7;
};

/// Shadow weights with the warmup law
/// beta_eff(step) = min(beta_max, (1 - 1/(step+1))^power).
class Ema {
public:
    Ema() = default;
    Ema(const nn::ParamRegistry<float>& params, EmaConfig cfg = {});

    static double effective_beta(int64_t step, const EmaConfig& cfg);

    void update(const nn::ParamRegistry<float>& params, int64_t step);
    std::vector<std::vector<float>>& shadow() { return shadow_; }
    const EmaConfig& config() const { return cfg_; }

    /// Exchanges shadow and live parameter values (call again to restore).
    void swap_into(nn::ParamRegistry<float>& params);

private:
    EmaConfig cfg_;
    std::vector<std::vector<float>> shadow_;
};

/// Global-norm gradient clip; returns the pre-clip norm.
double clip_global_norm(nn::ParamRegistry<float>& params, double max_norm);

// ---------------------------------------------------------------------------
// synthetic data

struct SynthClass {
    std::string label;
    double freq_min = 300.0;
    double freq_max = 700.0;
};

struct SynthSpec {
    int sample_rate = 4000;
    int64_t length = 2048;
    uint64_t seed = 0;
    std::string kind = "sine_mix";  // sine_mix | classes | chirp
    int tones_min = 1;
    int tones_max = 1;
    double freq_min = 300.0;
    double freq_max = 700.0;
    double amp_min = 0.4;
    double amp_max = 0.9;
    bool labeled = false;
    std::vector<SynthClass> classes;
    std::vector<double> tone_grid;  // non-empty: frequencies snap to this set
};

struct SynthSample {
    signal::Waveform wave;
    std::string label;
};

/// Deterministic in (spec.seed, index); |x| <= 1 by construction.
SynthSample synth_sample(const SynthSpec& spec, int64_t index);

// ---------------------------------------------------------------------------
// checkpoints ("WDF1")

struct BadMagicError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorEntry {
    std::string name;
    nn::Shape shape;
    std::vector<float> data;
};

struct CheckpointData {
    uint32_t version = 1;
    std::string config_json;  // run configuration, stored verbatim
    int64_t step = 0;
    uint64_t seed = 0;
    std::array<uint64_t, 4> rng_state{};
    std::vector<TensorEntry> tensors;

    const TensorEntry* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);

/// Self-describing load: tensor names/shapes come from the header alone.
CheckpointData load_checkpoint(const std::string& path);

/// Packs parameters, optimizer moments, and EMA shadows under the prefixes
/// "param:", "adam_m:", "adam_v:", "ema:".
CheckpointData bundle_state(const nn::ParamRegistry<float>& params, const AdamW& opt,
                            const Ema& ema, const std::string& config_json, int64_t step,
                            uint64_t seed, const std::array<uint64_t, 4>& rng_state);

/// Restores by name; every bundled tensor must match shape-for-shape.
void restore_state(const CheckpointData& data, nn::ParamRegistry<float>& params, AdamW& opt,
                   Ema& ema);

// ---------------------------------------------------------------------------
// training loop

struct NanAbortError : std::runtime_error {
    explicit NanAbortError(const std::string& msg, std::string last_checkpoint_)
        : std::runtime_error(msg), last_checkpoint(std::move(last_checkpoint_)) {}
    std::string last_checkpoint;
};

struct TrainConfig {
    int64_t steps = 2000;  // total target (resume continues toward it)
    int64_t batch_size = 8;
    AdamWConfig adamw;
    EmaConfig ema;
    double clip_norm = 1.0;
    int64_t checkpoint_every = 500;
    uint64_t seed = 0;
    std::string run_dir;  // empty: no metrics/checkpoint files
};

struct TrainHooks {
    std::function<models::Batch(int64_t step)> make_batch;
    std::function<nn::Tensor<float>(const models::Batch&, Rng&)> loss;
    nn::ParamRegistry<float>* params = nullptr;
};

struct TrainResult {
    int64_t steps_done = 0;
    std::vector<float> losses;  // losses of the steps run in this call
    std::string last_checkpoint;
};

/// Single-writer deterministic loop: per-step CSV metrics, periodic
/// checkpoints, NaN abort with the last good checkpoint retained.
TrainResult train_loop(const TrainHooks& hooks, const TrainConfig& cfg,
                       const std::string& config_json, AdamW& opt, Ema& ema, Rng& rng,
                       int64_t start_step = 0);

/// Deterministic batches from the synthetic corpus: element (step, i) is
/// dataset index (step-1)*batch + i regardless of worker scheduling.
models::Batch synth_batch(const SynthSpec& spec, int64_t step, int64_t batch_size);

}  // namespace wavediff::train

#endif  // WAVEDIFF_TRAINING_HPP
