// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_CONFIG_HPP
#define WAVEDIFF_CONFIG_HPP

#include <functional>
#include <memory>
#include <string>

#include "wavediff/models.hpp"
#include "wavediff/training.hpp"

namespace wavediff::config {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parsed and validated run configuration. `normalized_json` is the
/// canonical dump stored inside checkpoints so a run is reconstructible
/// from the checkpoint alone.
struct RunConfig {
    std::string kind;  // generator | text_generator | autoencoder | upsampler | vocoder
    models::ModelConfig model;
    models::AutoencoderConfig autoencoder;
    models::UpsamplerConfig upsampler;
    models::VocoderConfig vocoder;

    std::string data_kind = "synth";  // synth | wav_dir
    train::SynthSpec synth;
    std::string wav_dir;

    train::TrainConfig train_cfg;

    int sample_steps = 50;
    double embedding_scale = 5.0;
    uint64_t sample_seed = 0;

    std::string normalized_json;
};

/// Rejects unknown keys anywhere in the document.
RunConfig parse_run_config(const std::string& json_text);
RunConfig parse_run_config_file(const std::string& path);

/// One constructed model of the configured kind behind a uniform surface.
struct BuiltModel {
    std::string kind;
    std::unique_ptr<models::DiffusionModel> generator;
    std::unique_ptr<models::AutoencoderModel> autoencoder;
    std::unique_ptr<models::UpsamplerModel> upsampler;
    std::unique_ptr<models::VocoderModel> vocoder;

    nn::ParamRegistry<float>& parameters();
    std::function<nn::Tensor<float>(const models::Batch&, Rng&)> loss_fn();
};

/// Construction is keyed by train.seed so (seed, config) fully determines
/// the initial state.
BuiltModel build_model(const RunConfig& cfg);

}  // namespace wavediff::config

#endif  // WAVEDIFF_CONFIG_HPP
