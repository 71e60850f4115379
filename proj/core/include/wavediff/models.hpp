// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_MODELS_HPP
#define WAVEDIFF_MODELS_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavediff/diffusion.hpp"
#include "wavediff/signal.hpp"
#include "wavediff/unet.hpp"

// The model assemblies: unconditional / text-conditional generator, diffusion
// autoencoder, upsampler, vocoder, and the two-stage latent pipeline.
namespace wavediff::models {

enum class TransformKind { none, patch, learned };

struct TransformConfig {
    TransformKind kind = TransformKind::learned;
    int64_t num_filters = 32;
    int64_t window_length = 16;
    int64_t stride = 16;     // learned
    int64_t patch_size = 1;  // patch

    int64_t total_stride() const {
        switch (kind) {
            case TransformKind::none: return 1;
            case TransformKind::patch: return patch_size;
            case TransformKind::learned: return stride;
        }
        return 1;
    }
};

struct TextConfig {
    bool enabled = false;
    int64_t vocab_size = 1024;
    int64_t max_length = 64;
    int64_t embedding_features = 32;
    double cfg_mask_proba = 0.1;
};

/// Core generator configuration (also the base of the wrapped assemblies).
struct ModelConfig {
    int64_t in_channels = 1;
    int sample_rate = 4000;
    int64_t length = 2048;  // declared training length T
    diffusion::Prediction prediction = diffusion::Prediction::v;
    int default_sample_steps = 50;
    int ddpm_steps = 1000;  // when prediction == eps (DDPM-style training)
    TransformConfig transform;
    TextConfig text;
    int64_t append_channels = 0;             // conditioning stacked on the input
    std::map<int, int64_t> inject_channels;  // level -> channels

    // architecture (training_length / in/out channels are derived)
    std::vector<int64_t> channels = {32, 64};
    std::vector<int64_t> factors = {1, 2};
    std::vector<int64_t> items = {1, 1};
    std::vector<int> attentions = {0, 1};
    std::vector<int> cross_attentions;  // defaults to text.enabled at every level
    int64_t attention_features = 16;
    int64_t attention_heads = 4;
    int64_t modulation_features = 32;
    int64_t max_attention_context = 2048;
};

/// Extra conditioning carried into a forward pass. Tensors may be graph
/// nodes (training through an encoder) or plain data (sampling).
struct ModelConditioning {
    nn::Tensor<float> append;                  // [B, A, T]
    std::map<int, nn::Tensor<float>> inject;   // level -> [B, C, L_level]
};

struct Batch {
    std::vector<float> samples;  // [B, C, T]
    int64_t batch = 0;
    std::vector<std::string> texts;
};

struct SampleOptions {
    int num_steps = 50;
    bool use_text = false;
    std::string text;
    double embedding_scale = 5.0;
    ModelConditioning cond;
};

class DiffusionModel {
public:
    DiffusionModel(const ModelConfig& cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamRegistry<float>& parameters() { return params_; }
    const nn::ParamRegistry<float>& parameters() const { return params_; }
    unet::UNetConfig net_config() const { return net_.cfg; }

    /// Draws per-element noise levels and noise, runs the denoiser, and
    /// returns the method loss (graph-connected for backward).
    nn::Tensor<float> training_loss(const Batch& batch, Rng& rng,
                                    const ModelConditioning& cond = {});

    /// Deterministic given the noise buffer; applies CFG when text is given.
    std::vector<float> sample(const std::vector<float>& noise, int64_t batch,
                              const SampleOptions& opts);

    /// One denoiser evaluation: x [B, C, T] plus conditioning -> prediction.
    nn::Tensor<float> predict(const nn::Tensor<float>& x, const std::vector<float>& levels,
                              const nn::Tensor<float>& embedding, const ModelConditioning& cond);

    const diffusion::NoiseSchedule& ddpm_schedule() const { return schedule_; }
    unet::TextConditioner<float>* text() { return text_ ? &*text_ : nullptr; }
    int64_t unet_input_length() const { return cfg_.length / cfg_.transform.total_stride(); }

private:
    ModelConfig cfg_;
    nn::ParamRegistry<float> params_;
    unet::UNet<float> net_;
    unet::TimeConditioning<float> time_;
    std::optional<unet::LearnedTransform<float>> lt_;
    std::optional<unet::TextConditioner<float>> text_;
    diffusion::NoiseSchedule schedule_;
};

// ---------------------------------------------------------------------------
// metadata augmentation (text-conditional training)

struct TrackMetadata {
    std::string title, artist, album, genre, year;
};

struct MetadataAugmentOptions {
    double drop_proba = 0.1;
    bool shuffle = true;
    std::optional<bool> comma_join;  // unset: drawn 50/50
};

/// Shuffles the metadata fields, drops each with the configured probability,
/// and appends the never-dropped "<i> of <N>" chunk indicator.
std::string metadata_to_text(const TrackMetadata& meta, int chunk_idx, int chunk_total, Rng& rng,
                             const MetadataAugmentOptions& opts = {});

// ---------------------------------------------------------------------------
// bottlenecks

enum class BottleneckKind { tanh_squash, variational, quantizer };

struct BottleneckResult {
    nn::Tensor<float> latent;
    nn::Tensor<float> aux_loss;  // undefined when the kind has none
};

/// pre_latent [B, Z, L] (variational expects 2Z channels carrying mu/logvar).
/// The quantizer needs its codebook [K, Z] and performs a straight-through
/// nearest-neighbour lookup.
BottleneckResult bottleneck_apply(BottleneckKind kind, const nn::Tensor<float>& pre_latent,
                                  Rng* rng, const nn::Tensor<float>* codebook = nullptr);

// ---------------------------------------------------------------------------
// autoencoder

struct AutoencoderConfig {
    signal::MelConfig mel;          // 1024 / 256 / 80
    int64_t encoder_hidden = 64;
    int64_t latent_channels = 32;
    int temporal_downsample = 3;    // halvings of the mel frame axis (2^3 = 8)
    BottleneckKind bottleneck = BottleneckKind::tanh_squash;
    int64_t quantizer_codes = 256;
    float aux_loss_weight = 1e-2f;
    ModelConfig decoder;            // in_channels 1; inject level derived
};

class AutoencoderModel {
public:
    AutoencoderModel(const AutoencoderConfig& cfg, uint64_t seed);

    const AutoencoderConfig& config() const { return cfg_; }
    nn::ParamRegistry<float>& parameters() { return decoder_->parameters(); }
    DiffusionModel& decoder() { return *decoder_; }

    /// Total compression: values in / values out per sample.
    int64_t latent_hop() const {
        return static_cast<int64_t>(cfg_.mel.hop) << cfg_.temporal_downsample;
    }
    int inject_level() const { return inject_level_; }

    /// Graph-connected encode (used in training).
    BottleneckResult encode_tensor(const nn::Tensor<float>& mel_batch, Rng* rng);

    /// Deterministic data-path encode of one waveform -> latent [Z, T/hop].
    std::vector<float> encode(const signal::Waveform& w);

    /// Latent [B, Z, Ll] -> waveform buffer [B, 1, Ll * latent_hop].
    std::vector<float> decode(const std::vector<float>& latent, int64_t batch, int64_t latent_len,
                              int num_steps, const std::vector<float>& noise);

    nn::Tensor<float> training_loss(const Batch& batch, Rng& rng);

    /// log1p-compressed mel tensor of a waveform batch, [B, M, Lmel].
    nn::Tensor<float> mel_tensor(const Batch& batch) const;

private:
    AutoencoderConfig cfg_;
    std::unique_ptr<DiffusionModel> decoder_;
    nn::Conv1d<float> enc_in_;
    std::vector<nn::Conv1d<float>> enc_down_;
    nn::Conv1d<float> enc_out_;
    nn::Tensor<float> codebook_;
    int inject_level_ = -1;
};

// ---------------------------------------------------------------------------
// upsampler

struct UpsamplerConfig {
    int rate_factor = 4;
    ModelConfig base;  // append_channels forced to in_channels
};

class UpsamplerModel {
public:
    UpsamplerModel(const UpsamplerConfig& cfg, uint64_t seed);

    const UpsamplerConfig& config() const { return cfg_; }
    nn::ParamRegistry<float>& parameters() { return core_->parameters(); }
    DiffusionModel& core() { return *core_; }

    nn::Tensor<float> training_loss(const Batch& batch, Rng& rng);

    /// x_low [B, C, T/r] -> x_high [B, C, T].
    std::vector<float> sample(const std::vector<float>& x_low, int64_t batch, int num_steps,
                              const std::vector<float>& noise);

private:
    UpsamplerConfig cfg_;
    std::unique_ptr<DiffusionModel> core_;
};

/// Windowed-sinc anti-aliased decimation by `factor` (reflect padding, unit
/// DC gain). data laid out [C, T].
std::vector<double> decimate(const std::vector<double>& x, int64_t channels, int64_t samples,
                             int factor);

/// Linear interpolation back to `out_len` per channel.
std::vector<double> interpolate_linear(const std::vector<double>& x, int64_t channels,
                                       int64_t samples, int64_t out_len);

// ---------------------------------------------------------------------------
// vocoder

struct VocoderConfig {
    signal::MelConfig mel;  // kernel/stride of the flatten conv mirror num_fft/hop
    ModelConfig base;       // in_channels 1, append_channels forced to 1
};

class VocoderModel {
public:
    VocoderModel(const VocoderConfig& cfg, uint64_t seed);

    const VocoderConfig& config() const { return cfg_; }
    nn::ParamRegistry<float>& parameters() { return core_->parameters(); }
    DiffusionModel& core() { return *core_; }

    nn::Tensor<float> training_loss(const Batch& batch, Rng& rng);

    /// mel [B, M, L] (data) -> waveform buffer [B, 1, T].
    std::vector<float> sample(const std::vector<float>& mel, int64_t batch, int64_t mel_frames,
                              int num_steps, const std::vector<float>& noise);

    /// Trainable transposed-conv flatten of a (log1p) mel batch to [B, 1, T].
    nn::Tensor<float> flatten(const nn::Tensor<float>& mel_batch, int64_t target_len);

private:
    VocoderConfig cfg_;
    std::unique_ptr<DiffusionModel> core_;
    nn::ConvTranspose1d<float> flatten_;
};

// ---------------------------------------------------------------------------
// two-stage latent pipeline

class LatentPipeline {
public:
    /// Validates that the text generator operates on the autoencoder's latent
    /// shape (channels and length).
    LatentPipeline(DiffusionModel& text_generator, AutoencoderModel& autoencoder);

    /// noise_latent [1, Z, Ll], noise_audio [1, 1, T].
    std::vector<float> sample(const std::string& text, double embedding_scale,
                              const std::vector<float>& noise_latent,
                              const std::vector<float>& noise_audio, int latent_steps,
                              int decode_steps);

    int64_t latent_length() const { return latent_len_; }

private:
    DiffusionModel* gen_;
    AutoencoderModel* ae_;
    int64_t latent_len_ = 0;
};

}  // namespace wavediff::models

#endif  // WAVEDIFF_MODELS_HPP
