// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: train / sample / encode / decode / upsample / vocode
// / repr. Exit codes: 0 success, 1 configuration or input error, 2 NaN abort.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavediff/config.hpp"
#include "wavediff/models.hpp"
#include "wavediff/signal.hpp"
#include "wavediff/training.hpp"
#include "wavediff/wav_io.hpp"

namespace fs = std::filesystem;
using namespace wavediff;

namespace {

// -------------------------------------------------------------------------
// latent file format: "WDL1", version, channels, length, float32 payload

constexpr char kLatentMagic[4] = {'W', 'D', 'L', '1'};

void write_latent(const std::string& path, int64_t channels, int64_t length,
                  const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot create " + path);
    out.write(kLatentMagic, 4);
    const uint32_t version = 1;
    const auto ch = static_cast<uint32_t>(channels);
    const auto len = static_cast<uint64_t>(length);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&ch), 4);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed for " + path);
}

void read_latent(const std::string& path, int64_t& channels, int64_t& length,
                 std::vector<float>& data) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    uint32_t version = 0, ch = 0;
    uint64_t len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&ch), 4);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kLatentMagic, 4) != 0) {
        throw std::runtime_error(path + " is not a latent file (bad magic)");
    }
    if (version != 1) throw std::runtime_error("unsupported latent file version");
    channels = ch;
    length = static_cast<int64_t>(len);
    data.resize(static_cast<size_t>(channels) * length);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated latent file " + path);
}

// -------------------------------------------------------------------------
// checkpoint plumbing

struct LoadedModel {
    config::RunConfig cfg;
    config::BuiltModel built;
};

LoadedModel load_model_from_checkpoint(const std::string& path, bool use_ema) {
    const auto ckpt = train::load_checkpoint(path);
    LoadedModel lm{config::parse_run_config(ckpt.config_json), {}};
    lm.built = config::build_model(lm.cfg);
    auto& params = lm.built.parameters();
    const std::string prefix = use_ema ? "ema:" : "param:";
    for (const auto& [name, p] : params.items()) {
        const auto* entry = ckpt.find(prefix + name);
        if (!entry) entry = ckpt.find("param:" + name);
        if (!entry) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
        if (entry->shape != p.shape()) {
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                                     nn::shape_str(entry->shape) + ", model expects " +
                                     nn::shape_str(p.shape()));
        }
        p.node()->value = entry->data;
    }
    return lm;
}

std::vector<float> make_noise(int64_t batch, int64_t channels, int64_t length, uint64_t seed) {
    std::vector<float> noise(batch * channels * length);
    for (int64_t b = 0; b < batch; ++b) {
        Rng rng = Rng::keyed(seed, static_cast<uint64_t>(b), 0x9015E);
        for (int64_t i = 0; i < channels * length; ++i) {
            noise[b * channels * length + i] = static_cast<float>(rng.normal());
        }
    }
    return noise;
}

signal::Waveform buffer_to_wave(const std::vector<float>& buf, int channels, int64_t samples,
                                int sample_rate) {
    signal::Waveform w(channels, samples, sample_rate);
    for (size_t i = 0; i < w.data.size(); ++i) {
        w.data[i] = std::clamp(static_cast<double>(buf[i]), -1.0, 1.0);  // export-only clamp
    }
    return w;
}

void report_wave(const std::vector<float>& buf, int64_t samples, int sample_rate) {
    float peak = 0.0f;
    for (float v : buf) peak = std::max(peak, std::abs(v));
    std::printf("duration %.3f s, peak amplitude %.4f\n",
                static_cast<double>(samples) / sample_rate, static_cast<double>(peak));
}

// -------------------------------------------------------------------------
// datasets

models::Batch wav_dir_batch(const std::vector<std::string>& files, const config::RunConfig& cfg,
                            int64_t step, int64_t batch_size) {
    const int64_t C = cfg.model.in_channels, T = cfg.model.length;
    models::Batch batch;
    batch.batch = batch_size;
    batch.samples.resize(batch_size * C * T);
    for (int64_t b = 0; b < batch_size; ++b) {
        const int64_t index = (step - 1) * batch_size + b;
        const auto& path = files[static_cast<size_t>(index) % files.size()];
        const auto w = wav::read(path);
        if (w.channels < C) {
            throw std::runtime_error(path + " has " + std::to_string(w.channels) +
                                     " channels, model needs " + std::to_string(C));
        }
        if (w.samples < T) {
            throw std::runtime_error(path + " is shorter than the training length " +
                                     std::to_string(T));
        }
        Rng rng = Rng::keyed(cfg.train_cfg.seed, static_cast<uint64_t>(index), 0xC409);
        const int64_t offset = w.samples == T ? 0 : rng.uniform_int(0, w.samples - T - 1);
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t t = 0; t < T; ++t) {
                batch.samples[(b * C + c) * T + t] = static_cast<float>(w.at(static_cast<int>(c), offset + t));
            }
        }
    }
    return batch;
}

// -------------------------------------------------------------------------
// commands

int cmd_train(const std::string& config_path, const std::string& run_dir_flag,
              const std::string& resume_path) {
    const auto cfg = config::parse_run_config_file(config_path);

    std::string run_dir = run_dir_flag;
    if (run_dir.empty()) {
        const char* root = std::getenv("WAVEDIFF_RUN_ROOT");
        const auto stem = fs::path(config_path).stem().string();
        run_dir = (fs::path(root ? root : "runs") / stem).string();
    }
    fs::create_directories(run_dir);
    fs::create_directories(fs::path(run_dir) / "samples");
    fs::copy_file(config_path, fs::path(run_dir) / "config.json",
                  fs::copy_options::overwrite_existing);

    auto built = config::build_model(cfg);
    train::AdamW opt(built.parameters(), cfg.train_cfg.adamw);
    train::Ema ema(built.parameters(), cfg.train_cfg.ema);
    Rng rng(cfg.train_cfg.seed);
    int64_t start_step = 0;

    if (!resume_path.empty()) {
        const auto ckpt = train::load_checkpoint(resume_path);
        // the run may extend train.steps, but the model and data must match
        const auto old_cfg = nlohmann::json::parse(ckpt.config_json);
        const auto new_cfg = nlohmann::json::parse(cfg.normalized_json);
        if (old_cfg.value("model", nlohmann::json()) != new_cfg.value("model", nlohmann::json()) ||
            old_cfg.value("data", nlohmann::json()) != new_cfg.value("data", nlohmann::json())) {
            throw std::runtime_error(
                "resume: checkpoint was trained with a different model/data config");
        }
        train::restore_state(ckpt, built.parameters(), opt, ema);
        rng.set_state(ckpt.rng_state);
        start_step = ckpt.step;
        std::printf("resuming from step %lld\n", static_cast<long long>(start_step));
    }

    train::TrainHooks hooks;
    hooks.params = &built.parameters();
    hooks.loss = built.loss_fn();
    if (cfg.data_kind == "synth") {
        hooks.make_batch = [&](int64_t step) {
            auto batch = train::synth_batch(cfg.synth, step, cfg.train_cfg.batch_size);
            if (cfg.model.in_channels != 1) {
                throw std::runtime_error("synthetic data is mono; model wants " +
                                         std::to_string(cfg.model.in_channels) + " channels");
            }
            return batch;
        };
    } else {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(cfg.wav_dir)) {
            if (e.path().extension() == ".wav") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error("no .wav files in " + cfg.wav_dir);
        hooks.make_batch = [files, &cfg](int64_t step) {
            return wav_dir_batch(files, cfg, step, cfg.train_cfg.batch_size);
        };
    }

    auto tcfg = cfg.train_cfg;
    tcfg.run_dir = run_dir;
    const auto result =
        train::train_loop(hooks, tcfg, cfg.normalized_json, opt, ema, rng, start_step);
    std::printf("trained %lld steps; metrics in %s/metrics.csv\n",
                static_cast<long long>(result.steps_done), run_dir.c_str());
    if (!result.last_checkpoint.empty()) {
        std::printf("checkpoint: %s\n", result.last_checkpoint.c_str());
    }
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& out_path, const std::string& text,
               int steps, double cfg_scale, uint64_t seed, int64_t length, bool raw_weights,
               bool pcm16) {
    auto lm = load_model_from_checkpoint(ckpt_path, !raw_weights);
    if (!lm.built.generator) {
        throw std::runtime_error("sample needs a generator checkpoint; use decode/upsample/vocode "
                                 "for the other model kinds");
    }
    auto& model = *lm.built.generator;
    const int64_t C = lm.cfg.model.in_channels;
    const int64_t T = length > 0 ? length : lm.cfg.model.length;

    models::SampleOptions opts;
    opts.num_steps = steps > 0 ? steps : lm.cfg.sample_steps;
    opts.use_text = !text.empty();
    opts.text = text;
    opts.embedding_scale = std::isnan(cfg_scale) ? lm.cfg.embedding_scale : cfg_scale;

    const auto noise = make_noise(1, C, T, seed);
    const auto out = model.sample(noise, 1, opts);
    wav::write(out_path, buffer_to_wave(out, static_cast<int>(C), T, lm.cfg.model.sample_rate),
               pcm16 ? wav::SampleFormat::pcm16 : wav::SampleFormat::float32);
    report_wave(out, T, lm.cfg.model.sample_rate);
    return 0;
}

int cmd_encode(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path) {
    auto lm = load_model_from_checkpoint(ckpt_path, true);
    if (!lm.built.autoencoder) throw std::runtime_error("encode needs an autoencoder checkpoint");
    auto& ae = *lm.built.autoencoder;

    auto w = wav::read(in_path);
    if (w.sample_rate != lm.cfg.model.sample_rate) {
        throw std::runtime_error("sample rate mismatch: model expects " +
                                 std::to_string(lm.cfg.model.sample_rate) + " Hz, file has " +
                                 std::to_string(w.sample_rate) + " Hz");
    }
    if (w.channels != 1) {
        // batching by channel applies to decode; encoding is defined per channel
        throw std::runtime_error("encode expects mono input, got " +
                                 std::to_string(w.channels) + " channels");
    }
    const auto latent = ae.encode(w);
    const int64_t latent_len = w.samples / ae.latent_hop();
    write_latent(out_path, ae.config().latent_channels, latent_len, latent);
    std::printf("latent [%lld, %lld] -> %s (%.1fx compression)\n",
                static_cast<long long>(ae.config().latent_channels),
                static_cast<long long>(latent_len), out_path.c_str(),
                static_cast<double>(w.samples) / static_cast<double>(latent.size()));
    return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path, int steps, uint64_t seed, bool pcm16) {
    auto lm = load_model_from_checkpoint(ckpt_path, true);
    if (!lm.built.autoencoder) throw std::runtime_error("decode needs an autoencoder checkpoint");
    auto& ae = *lm.built.autoencoder;

    int64_t channels = 0, latent_len = 0;
    std::vector<float> latent;
    read_latent(in_path, channels, latent_len, latent);
    if (channels != ae.config().latent_channels) {
        throw std::runtime_error("latent has " + std::to_string(channels) +
                                 " channels, model expects " +
                                 std::to_string(ae.config().latent_channels));
    }
    const int64_t T = latent_len * ae.latent_hop();
    const int resolved_steps = steps > 0 ? steps : lm.cfg.sample_steps;
    const auto noise = make_noise(1, 1, T, seed);
    const auto out = ae.decode(latent, 1, latent_len, resolved_steps, noise);
    wav::write(out_path, buffer_to_wave(out, 1, T, lm.cfg.model.sample_rate),
               pcm16 ? wav::SampleFormat::pcm16 : wav::SampleFormat::float32);
    report_wave(out, T, lm.cfg.model.sample_rate);
    return 0;
}

int cmd_upsample(const std::string& ckpt_path, const std::string& in_path,
                 const std::string& out_path, int steps, uint64_t seed, bool pcm16) {
    auto lm = load_model_from_checkpoint(ckpt_path, true);
    if (!lm.built.upsampler) throw std::runtime_error("upsample needs an upsampler checkpoint");
    auto& up = *lm.built.upsampler;
    const int r = up.config().rate_factor;
    const int64_t C = lm.cfg.model.in_channels;
    const int64_t T = lm.cfg.model.length;

    auto w = wav::read(in_path);
    const int expect_sr = lm.cfg.model.sample_rate / r;
    if (w.sample_rate != expect_sr) {
        throw std::runtime_error("upsample: expected input at " + std::to_string(expect_sr) +
                                 " Hz, file has " + std::to_string(w.sample_rate) + " Hz");
    }
    if (w.channels != C || w.samples != T / r) {
        throw std::runtime_error("upsample: expected [" + std::to_string(C) + ", " +
                                 std::to_string(T / r) + "], file has [" +
                                 std::to_string(w.channels) + ", " + std::to_string(w.samples) +
                                 "]");
    }
    std::vector<float> x_low(w.data.size());
    for (size_t i = 0; i < x_low.size(); ++i) x_low[i] = static_cast<float>(w.data[i]);

    const int resolved_steps = steps > 0 ? steps : lm.cfg.sample_steps;
    const auto noise = make_noise(1, C, T, seed);
    const auto out = up.sample(x_low, 1, resolved_steps, noise);
    wav::write(out_path,
               buffer_to_wave(out, static_cast<int>(C), T, lm.cfg.model.sample_rate),
               pcm16 ? wav::SampleFormat::pcm16 : wav::SampleFormat::float32);
    report_wave(out, T, lm.cfg.model.sample_rate);
    return 0;
}

int cmd_vocode(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path, int steps, uint64_t seed, bool pcm16) {
    auto lm = load_model_from_checkpoint(ckpt_path, true);
    if (!lm.built.vocoder) throw std::runtime_error("vocode needs a vocoder checkpoint");
    auto& voc = *lm.built.vocoder;
    const auto& mel_cfg = voc.config().mel;

    auto w = wav::read(in_path);
    if (w.sample_rate != lm.cfg.model.sample_rate) {
        throw std::runtime_error("vocode: model expects " +
                                 std::to_string(lm.cfg.model.sample_rate) + " Hz, file has " +
                                 std::to_string(w.sample_rate) + " Hz");
    }
    if (w.samples != lm.cfg.model.length) {
        throw std::runtime_error("vocode: expected length " + std::to_string(lm.cfg.model.length) +
                                 ", file has " + std::to_string(w.samples));
    }

    // stereo is decoded by batching the channels
    const int C = w.channels;
    const auto mel = signal::mel_spectrogram(w, mel_cfg);
    const int64_t L = mel.num_frames;
    std::vector<float> mel_buf(static_cast<size_t>(C) * mel_cfg.num_mels * L);
    for (size_t i = 0; i < mel.data.size(); ++i) mel_buf[i] = static_cast<float>(mel.data[i]);

    const int resolved_steps = steps > 0 ? steps : lm.cfg.sample_steps;
    const auto noise = make_noise(C, 1, L * mel_cfg.hop, seed);
    const auto out = voc.sample(mel_buf, C, L, resolved_steps, noise);

    signal::Waveform result(C, L * mel_cfg.hop, lm.cfg.model.sample_rate);
    for (int c = 0; c < C; ++c) {
        for (int64_t t = 0; t < result.samples; ++t) {
            result.at(c, t) =
                std::clamp(static_cast<double>(out[c * result.samples + t]), -1.0, 1.0);
        }
    }
    wav::write(out_path, result, pcm16 ? wav::SampleFormat::pcm16 : wav::SampleFormat::float32);
    report_wave(out, result.samples, lm.cfg.model.sample_rate);
    return 0;
}

int cmd_repr(const std::string& in_path, const std::string& kind, const std::string& out_path,
             int num_fft, int hop, int mels, double fmin, double fmax) {
    const auto w = wav::read(in_path);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot create " + out_path);
    out.precision(9);

    if (kind == "mel") {
        signal::MelConfig cfg;
        cfg.num_fft = num_fft;
        cfg.hop = hop;
        cfg.num_mels = mels;
        cfg.fmin = fmin;
        cfg.fmax = fmax;
        const auto mel = signal::mel_spectrogram(w, cfg);
        for (int c = 0; c < mel.channels; ++c) {
            for (int m = 0; m < mel.num_mels; ++m) {
                for (int64_t l = 0; l < mel.num_frames; ++l) {
                    out << mel.at(c, m, l) << (l + 1 == mel.num_frames ? "\n" : ",");
                }
            }
        }
    } else if (kind == "stft") {
        const auto mp = signal::to_mag_phase(signal::stft(w, num_fft, hop));
        for (int c = 0; c < mp.channels; ++c) {
            for (int f = 0; f < mp.bins; ++f) {
                for (int64_t l = 0; l < mp.num_frames; ++l) {
                    out << mp.magnitude[mp.index(c, f, l)]
                        << (l + 1 == mp.num_frames ? "\n" : ",");
                }
            }
        }
    } else {
        throw std::runtime_error("repr: kind must be mel or stft");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wavediff: desk-scale audio diffusion engine"};
    app.require_subcommand(1);

    // train
    std::string config_path, run_dir, resume_path;
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
    train_cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
    train_cmd->add_option("--run-dir", run_dir,
                          "output directory (default: $WAVEDIFF_RUN_ROOT/<config stem>)");
    train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");

    // shared sampling flags
    std::string ckpt_path, out_path, in_path, text;
    int steps = 0;
    double cfg_scale = std::nan("");
    uint64_t seed = 0;
    int64_t length = 0;
    bool raw_weights = false, pcm16 = false;

    auto add_io = [&](CLI::App* cmd, bool needs_in) {
        cmd->add_option("--checkpoint", ckpt_path, "model checkpoint (.wdf)")->required();
        if (needs_in) cmd->add_option("--in", in_path, "input file")->required();
        cmd->add_option("--out", out_path, "output file")->required();
        cmd->add_option("--steps", steps, "sampler steps (default from the run config)");
        cmd->add_option("--seed", seed, "noise seed");
        cmd->add_flag("--pcm16", pcm16, "write 16-bit PCM instead of float32");
    };

    auto* sample_cmd = app.add_subcommand("sample", "generate audio from noise");
    add_io(sample_cmd, false);
    sample_cmd->add_option("--text", text, "text prompt (enables classifier-free guidance)");
    sample_cmd->add_option("--cfg-scale", cfg_scale, "guidance scale (default from config, 5.0)");
    sample_cmd->add_option("--length", length, "output length in samples (default: model length)");
    sample_cmd->add_flag("--raw-weights", raw_weights, "sample with raw instead of EMA weights");

    auto* encode_cmd = app.add_subcommand("encode", "waveform -> latent (autoencoder)");
    encode_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint (.wdf)")->required();
    encode_cmd->add_option("--in", in_path, "input WAV")->required();
    encode_cmd->add_option("--out", out_path, "output latent (.wdl)")->required();

    auto* decode_cmd = app.add_subcommand("decode", "latent -> waveform (autoencoder)");
    add_io(decode_cmd, true);

    auto* upsample_cmd = app.add_subcommand("upsample", "low-rate WAV -> high-rate WAV");
    add_io(upsample_cmd, true);

    auto* vocode_cmd = app.add_subcommand("vocode", "WAV -> mel -> reconstructed WAV");
    add_io(vocode_cmd, true);

    std::string repr_kind = "mel";
    int repr_fft = 1024, repr_hop = 256, repr_mels = 80;
    double repr_fmin = 0.0, repr_fmax = 0.0;
    auto* repr_cmd = app.add_subcommand("repr", "dump mel / STFT magnitude as CSV");
    repr_cmd->add_option("--in", in_path, "input WAV")->required();
    repr_cmd->add_option("--out", out_path, "output CSV")->required();
    repr_cmd->add_option("--kind", repr_kind, "mel | stft");
    repr_cmd->add_option("--num-fft", repr_fft, "window size");
    repr_cmd->add_option("--hop", repr_hop, "hop size");
    repr_cmd->add_option("--mels", repr_mels, "mel channels");
    repr_cmd->add_option("--fmin", repr_fmin, "lowest mel frequency");
    repr_cmd->add_option("--fmax", repr_fmax, "highest mel frequency (0: Nyquist)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(config_path, run_dir, resume_path);
        if (app.got_subcommand(sample_cmd)) {
            return cmd_sample(ckpt_path, out_path, text, steps, cfg_scale, seed, length,
                              raw_weights, pcm16);
        }
        if (app.got_subcommand(encode_cmd)) return cmd_encode(ckpt_path, in_path, out_path);
        if (app.got_subcommand(decode_cmd)) {
            return cmd_decode(ckpt_path, in_path, out_path, steps, seed, pcm16);
        }
        if (app.got_subcommand(upsample_cmd)) {
            return cmd_upsample(ckpt_path, in_path, out_path, steps, seed, pcm16);
        }
        if (app.got_subcommand(vocode_cmd)) {
            return cmd_vocode(ckpt_path, in_path, out_path, steps, seed, pcm16);
        }
        if (app.got_subcommand(repr_cmd)) {
            return cmd_repr(in_path, repr_kind, out_path, repr_fft, repr_hop, repr_mels, repr_fmin,
                            repr_fmax);
        }
    } catch (const train::NanAbortError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!e.last_checkpoint.empty()) {
            std::cerr << "last good checkpoint: " << e.last_checkpoint << "\n";
        }
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
