// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace wavediff::config {

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config: " + path + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("config: unknown key '" + path + "." + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

std::vector<int64_t> get_i64_list(const json& obj, const char* key,
                                  std::vector<int64_t> fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<std::vector<int64_t>>();
}

std::vector<int> get_flag_list(const json& obj, const char* key, std::vector<int> fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<std::vector<int>>();
}

void parse_pair(const json& obj, const char* key, double& lo, double& hi) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_array() || v.size() != 2) {
        throw ConfigError(std::string("config: '") + key + "' must be [lo, hi]");
    }
    lo = v.at(0).get<double>();
    hi = v.at(1).get<double>();
}

signal::MelConfig parse_mel(const json& obj, const std::string& path) {
    check_keys(obj, path, {"num_fft", "hop", "num_mels", "fmin", "fmax"});
    signal::MelConfig mel;
    mel.num_fft = get_or(obj, "num_fft", 1024);
    mel.hop = get_or(obj, "hop", 256);
    mel.num_mels = get_or(obj, "num_mels", 80);
    mel.fmin = get_or(obj, "fmin", 0.0);
    mel.fmax = get_or(obj, "fmax", 0.0);
    return mel;
}

models::ModelConfig parse_model(const json& m) {
    check_keys(m, "model",
               {"kind", "in_channels", "sample_rate", "length", "method", "ddpm_steps",
                "default_sample_steps", "transform", "unet", "text", "autoencoder", "upsampler",
                "vocoder"});
    models::ModelConfig cfg;
    cfg.in_channels = get_or<int64_t>(m, "in_channels", 1);
    cfg.sample_rate = get_or(m, "sample_rate", 4000);
    cfg.length = get_or<int64_t>(m, "length", 2048);
    cfg.default_sample_steps = get_or(m, "default_sample_steps", 50);
    cfg.ddpm_steps = get_or(m, "ddpm_steps", 1000);

    const auto method = get_or<std::string>(m, "method", "v");
    if (method == "v") {
        cfg.prediction = diffusion::Prediction::v;
    } else if (method == "ddpm") {
        cfg.prediction = diffusion::Prediction::eps;
    } else {
        throw ConfigError("config: model.method must be 'v' or 'ddpm', got '" + method + "'");
    }

    if (m.contains("transform")) {
        const auto& t = m.at("transform");
        check_keys(t, "model.transform",
                   {"kind", "num_filters", "window_length", "stride", "patch_size"});
        const auto kind = get_or<std::string>(t, "kind", "learned");
        if (kind == "learned") {
            cfg.transform.kind = models::TransformKind::learned;
            cfg.transform.num_filters = get_or<int64_t>(t, "num_filters", 32);
            cfg.transform.window_length = get_or<int64_t>(t, "window_length", 16);
            cfg.transform.stride = get_or<int64_t>(t, "stride", 16);
        } else if (kind == "patch") {
            cfg.transform.kind = models::TransformKind::patch;
            cfg.transform.patch_size = get_or<int64_t>(t, "patch_size", 8);
        } else if (kind == "none") {
            cfg.transform.kind = models::TransformKind::none;
        } else {
            throw ConfigError("config: model.transform.kind must be learned|patch|none");
        }
    }

    if (m.contains("unet")) {
        const auto& u = m.at("unet");
        check_keys(u, "model.unet",
                   {"channels", "factors", "items", "attentions", "cross_attentions",
                    "attention_features", "attention_heads", "modulation_features",
                    "max_attention_context"});
        cfg.channels = get_i64_list(u, "channels", cfg.channels);
        cfg.factors = get_i64_list(u, "factors", cfg.factors);
        cfg.items = get_i64_list(u, "items", cfg.items);
        cfg.attentions = get_flag_list(u, "attentions", cfg.attentions);
        cfg.cross_attentions = get_flag_list(u, "cross_attentions", cfg.cross_attentions);
        cfg.attention_features = get_or<int64_t>(u, "attention_features", cfg.attention_features);
        cfg.attention_heads = get_or<int64_t>(u, "attention_heads", cfg.attention_heads);
        cfg.modulation_features =
            get_or<int64_t>(u, "modulation_features", cfg.modulation_features);
        cfg.max_attention_context =
            get_or<int64_t>(u, "max_attention_context", cfg.max_attention_context);
    }

    if (m.contains("text")) {
        const auto& t = m.at("text");
        check_keys(t, "model.text",
                   {"enabled", "vocab_size", "max_length", "embedding_features",
                    "cfg_mask_proba"});
        cfg.text.enabled = get_or(t, "enabled", true);
        cfg.text.vocab_size = get_or<int64_t>(t, "vocab_size", 1024);
        cfg.text.max_length = get_or<int64_t>(t, "max_length", 64);
        cfg.text.embedding_features = get_or<int64_t>(t, "embedding_features", 32);
        cfg.text.cfg_mask_proba = get_or(t, "cfg_mask_proba", 0.1);
    }
    return cfg;
}

train::SynthSpec parse_synth(const json& d, const models::ModelConfig& model) {
    train::SynthSpec spec;
    spec.sample_rate = model.sample_rate;
    spec.length = model.length;
    if (!d.contains("synth")) return spec;
    const auto& s = d.at("synth");
    check_keys(s, "data.synth",
               {"kind", "sample_rate", "length", "seed", "tones", "freq", "amp", "labeled",
                "classes", "tone_grid"});
    spec.kind = get_or<std::string>(s, "kind", "sine_mix");
    spec.sample_rate = get_or(s, "sample_rate", model.sample_rate);
    spec.length = get_or<int64_t>(s, "length", model.length);
    spec.seed = get_or<uint64_t>(s, "seed", 0);
    if (s.contains("tones")) {
        const auto& t = s.at("tones");
        spec.tones_min = t.at(0).get<int>();
        spec.tones_max = t.at(1).get<int>();
    }
    parse_pair(s, "freq", spec.freq_min, spec.freq_max);
    parse_pair(s, "amp", spec.amp_min, spec.amp_max);
    spec.labeled = get_or(s, "labeled", false);
    if (s.contains("classes")) {
        for (const auto& c : s.at("classes")) {
            check_keys(c, "data.synth.classes[]", {"label", "freq"});
            train::SynthClass cls;
            cls.label = c.at("label").get<std::string>();
            parse_pair(c, "freq", cls.freq_min, cls.freq_max);
            spec.classes.push_back(std::move(cls));
        }
    }
    if (s.contains("tone_grid")) {
        spec.tone_grid = s.at("tone_grid").get<std::vector<double>>();
    }
    if (spec.sample_rate != model.sample_rate || spec.length != model.length) {
        throw ConfigError("config: data.synth sample_rate/length must match the model");
    }
    return spec;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(root, "<root>", {"model", "data", "train", "sample"});
    if (!root.contains("model")) throw ConfigError("config: missing 'model' section");

    RunConfig cfg;
    const auto& m = root.at("model");
    cfg.kind = get_or<std::string>(m, "kind", "generator");
    cfg.model = parse_model(m);

    static const std::set<std::string> kinds = {"generator", "text_generator", "autoencoder",
                                                "upsampler", "vocoder"};
    if (!kinds.count(cfg.kind)) {
        throw ConfigError("config: model.kind '" + cfg.kind + "' is not one of "
                          "generator|text_generator|autoencoder|upsampler|vocoder");
    }
    if (cfg.kind == "text_generator" && !cfg.model.text.enabled) {
        cfg.model.text.enabled = true;  // kind implies text conditioning
    }

    if (cfg.kind == "autoencoder") {
        cfg.autoencoder.decoder = cfg.model;
        if (m.contains("autoencoder")) {
            const auto& a = m.at("autoencoder");
            check_keys(a, "model.autoencoder",
                       {"mel", "encoder_hidden", "latent_channels", "temporal_downsample",
                        "bottleneck", "quantizer_codes", "aux_loss_weight"});
            if (a.contains("mel")) cfg.autoencoder.mel = parse_mel(a.at("mel"), "model.autoencoder.mel");
            cfg.autoencoder.encoder_hidden =
                get_or<int64_t>(a, "encoder_hidden", cfg.autoencoder.encoder_hidden);
            cfg.autoencoder.latent_channels =
                get_or<int64_t>(a, "latent_channels", cfg.autoencoder.latent_channels);
            cfg.autoencoder.temporal_downsample =
                get_or(a, "temporal_downsample", cfg.autoencoder.temporal_downsample);
            const auto b = get_or<std::string>(a, "bottleneck", "tanh");
            if (b == "tanh") {
                cfg.autoencoder.bottleneck = models::BottleneckKind::tanh_squash;
            } else if (b == "variational") {
                cfg.autoencoder.bottleneck = models::BottleneckKind::variational;
            } else if (b == "quantizer") {
                cfg.autoencoder.bottleneck = models::BottleneckKind::quantizer;
            } else {
                throw ConfigError("config: bottleneck must be tanh|variational|quantizer");
            }
            cfg.autoencoder.quantizer_codes =
                get_or<int64_t>(a, "quantizer_codes", cfg.autoencoder.quantizer_codes);
            cfg.autoencoder.aux_loss_weight =
                get_or(a, "aux_loss_weight", cfg.autoencoder.aux_loss_weight);
        }
    } else if (m.contains("autoencoder")) {
        throw ConfigError("config: 'autoencoder' section requires kind autoencoder");
    }

    if (cfg.kind == "upsampler") {
        cfg.upsampler.base = cfg.model;
        if (m.contains("upsampler")) {
            const auto& u = m.at("upsampler");
            check_keys(u, "model.upsampler", {"rate_factor"});
            cfg.upsampler.rate_factor = get_or(u, "rate_factor", 4);
        }
    } else if (m.contains("upsampler")) {
        throw ConfigError("config: 'upsampler' section requires kind upsampler");
    }

    if (cfg.kind == "vocoder") {
        cfg.vocoder.base = cfg.model;
        if (m.contains("vocoder")) {
            const auto& v = m.at("vocoder");
            check_keys(v, "model.vocoder", {"mel"});
            if (v.contains("mel")) cfg.vocoder.mel = parse_mel(v.at("mel"), "model.vocoder.mel");
        }
    } else if (m.contains("vocoder")) {
        throw ConfigError("config: 'vocoder' section requires kind vocoder");
    }

    if (root.contains("data")) {
        const auto& d = root.at("data");
        check_keys(d, "data", {"kind", "synth", "path"});
        cfg.data_kind = get_or<std::string>(d, "kind", "synth");
        if (cfg.data_kind == "synth") {
            cfg.synth = parse_synth(d, cfg.model);
        } else if (cfg.data_kind == "wav_dir") {
            cfg.wav_dir = get_or<std::string>(d, "path", "");
            if (cfg.wav_dir.empty()) throw ConfigError("config: data.path required for wav_dir");
        } else {
            throw ConfigError("config: data.kind must be synth|wav_dir");
        }
    } else {
        cfg.synth = parse_synth(json::object(), cfg.model);
    }

    if (root.contains("train")) {
        const auto& t = root.at("train");
        check_keys(t, "train",
                   {"steps", "batch_size", "lr", "beta1", "beta2", "eps", "weight_decay",
                    "ema_beta", "ema_power", "clip_norm", "checkpoint_every", "seed"});
        cfg.train_cfg.steps = get_or<int64_t>(t, "steps", 2000);
        cfg.train_cfg.batch_size = get_or<int64_t>(t, "batch_size", 8);
        cfg.train_cfg.adamw.lr = get_or(t, "lr", 1e-4f);
        cfg.train_cfg.adamw.beta1 = get_or(t, "beta1", 0.95f);
        cfg.train_cfg.adamw.beta2 = get_or(t, "beta2", 0.999f);
        cfg.train_cfg.adamw.eps = get_or(t, "eps", 1e-6f);
        cfg.train_cfg.adamw.weight_decay = get_or(t, "weight_decay", 1e-3f);
        cfg.train_cfg.ema.beta_max = get_or(t, "ema_beta", 0.995);
        cfg.train_cfg.ema.power = get_or(t, "ema_power", 0.7);
        cfg.train_cfg.clip_norm = get_or(t, "clip_norm", 1.0);
        cfg.train_cfg.checkpoint_every = get_or<int64_t>(t, "checkpoint_every", 500);
        cfg.train_cfg.seed = get_or<uint64_t>(t, "seed", 0);
    }

    if (root.contains("sample")) {
        const auto& s = root.at("sample");
        check_keys(s, "sample", {"num_steps", "embedding_scale", "seed"});
        cfg.sample_steps = get_or(s, "num_steps", 50);
        cfg.embedding_scale = get_or(s, "embedding_scale", 5.0);
        cfg.sample_seed = get_or<uint64_t>(s, "seed", 0);
    }

    cfg.normalized_json = root.dump();
    return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    return parse_run_config(text);
}

nn::ParamRegistry<float>& BuiltModel::parameters() {
    if (generator) return generator->parameters();
    if (autoencoder) return autoencoder->parameters();
    if (upsampler) return upsampler->parameters();
    if (vocoder) return vocoder->parameters();
    throw std::logic_error("BuiltModel: empty");
}

std::function<nn::Tensor<float>(const models::Batch&, Rng&)> BuiltModel::loss_fn() {
    if (generator) {
        auto* model = generator.get();
        return [model](const models::Batch& b, Rng& r) { return model->training_loss(b, r); };
    }
    if (autoencoder) {
        auto* model = autoencoder.get();
        return [model](const models::Batch& b, Rng& r) { return model->training_loss(b, r); };
    }
    if (upsampler) {
        auto* model = upsampler.get();
        return [model](const models::Batch& b, Rng& r) { return model->training_loss(b, r); };
    }
    if (vocoder) {
        auto* model = vocoder.get();
        return [model](const models::Batch& b, Rng& r) { return model->training_loss(b, r); };
    }
    throw std::logic_error("BuiltModel: empty");
}

BuiltModel build_model(const RunConfig& cfg) {
    BuiltModel built;
    built.kind = cfg.kind;
    const uint64_t seed = cfg.train_cfg.seed;
    if (cfg.kind == "generator" || cfg.kind == "text_generator") {
        built.generator = std::make_unique<models::DiffusionModel>(cfg.model, seed);
    } else if (cfg.kind == "autoencoder") {
        built.autoencoder = std::make_unique<models::AutoencoderModel>(cfg.autoencoder, seed);
    } else if (cfg.kind == "upsampler") {
        built.upsampler = std::make_unique<models::UpsamplerModel>(cfg.upsampler, seed);
    } else if (cfg.kind == "vocoder") {
        built.vocoder = std::make_unique<models::VocoderModel>(cfg.vocoder, seed);
    } else {
        throw ConfigError("config: unknown model kind '" + cfg.kind + "'");
    }
    return built;
}

}  // namespace wavediff::config
