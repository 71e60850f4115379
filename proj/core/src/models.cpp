// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wavediff::models {

using nn::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

unet::UNetConfig make_net_config(const ModelConfig& cfg) {
    unet::UNetConfig net;
    const int64_t data_ch = cfg.in_channels + cfg.append_channels;
    const int64_t stride = cfg.transform.total_stride();
    switch (cfg.transform.kind) {
        case TransformKind::none:
            net.in_channels = data_ch;
            net.out_channels = cfg.in_channels;
            break;
        case TransformKind::patch:
            net.in_channels = data_ch * cfg.transform.patch_size;
            net.out_channels = cfg.in_channels * cfg.transform.patch_size;
            break;
        case TransformKind::learned:
            net.in_channels = cfg.transform.num_filters;
            net.out_channels = cfg.transform.num_filters;
            break;
    }
    net.channels = cfg.channels;
    net.factors = cfg.factors;
    net.items = cfg.items;
    net.attentions = cfg.attentions;
    net.cross_attentions = cfg.cross_attentions;
    if (net.cross_attentions.empty()) {
        net.cross_attentions.assign(cfg.channels.size(), cfg.text.enabled ? 1 : 0);
    }
    net.attention_features = cfg.attention_features;
    net.attention_heads = cfg.attention_heads;
    net.modulation_features = cfg.modulation_features;
    net.embedding_features = cfg.text.enabled ? cfg.text.embedding_features : 0;
    net.max_attention_context = cfg.max_attention_context;
    if (cfg.length % stride != 0) {
        throw std::invalid_argument("model: length " + std::to_string(cfg.length) +
                                    " not divisible by transform stride " + std::to_string(stride));
    }
    net.training_length = cfg.length / stride;
    if (!cfg.inject_channels.empty()) {
        net.inject_channels.assign(cfg.channels.size(), 0);
        for (const auto& [level, ch] : cfg.inject_channels) {
            if (level < 0 || level >= static_cast<int>(cfg.channels.size())) {
                throw std::invalid_argument("model: inject level out of range");
            }
            net.inject_channels[level] = ch;
        }
    }
    return net;
}

std::vector<float> waveform_to_floats(const signal::Waveform& w) {
    std::vector<float> out(w.data.size());
    for (size_t i = 0; i < w.data.size(); ++i) out[i] = static_cast<float>(w.data[i]);
    return out;
}

signal::Waveform floats_to_waveform(const float* data, int64_t channels, int64_t samples,
                                    int sample_rate) {
    signal::Waveform w(static_cast<int>(channels), samples, sample_rate);
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] = static_cast<double>(data[i]);
    return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// DiffusionModel

DiffusionModel::DiffusionModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.in_channels < 1) throw std::invalid_argument("model: in_channels must be >= 1");
    if (cfg_.length < 1) throw std::invalid_argument("model: length must be >= 1");
    if (cfg_.prediction == diffusion::Prediction::x0) {
        throw std::invalid_argument("model: x0 prediction is not a training method here");
    }

    Rng rng(seed);
    net_ = unet::build_unet(make_net_config(cfg_), params_, rng);
    time_ = unet::TimeConditioning<float>(params_, "time", cfg_.modulation_features, rng);
    if (cfg_.transform.kind == TransformKind::learned) {
        lt_.emplace(params_, "lt", cfg_.in_channels + cfg_.append_channels, cfg_.in_channels,
                    cfg_.transform.num_filters, cfg_.transform.window_length,
                    cfg_.transform.stride, rng);
    }
    if (cfg_.text.enabled) {
        text_.emplace(params_, "text", cfg_.text.vocab_size, cfg_.text.max_length,
                      cfg_.text.embedding_features, rng);
    }
    if (cfg_.prediction == diffusion::Prediction::eps) {
        schedule_ = diffusion::NoiseSchedule::linear(cfg_.ddpm_steps);
    }
}

Tensor<float> DiffusionModel::predict(const Tensor<float>& x, const std::vector<float>& levels,
                                      const Tensor<float>& embedding,
                                      const ModelConditioning& cond) {
    if (x.rank() != 3 || x.dim(1) != cfg_.in_channels || x.dim(2) % cfg_.transform.total_stride() != 0) {
        throw std::invalid_argument("model: bad input shape " + nn::shape_str(x.shape()));
    }
    Tensor<float> h = x;
    if (cfg_.append_channels > 0) {
        if (!cond.append.defined()) {
            throw std::invalid_argument("model: conditioning channels required but missing");
        }
        if (cond.append.dim(1) != cfg_.append_channels || cond.append.dim(2) != x.dim(2)) {
            throw std::invalid_argument("model: conditioning channels have shape " +
                                        nn::shape_str(cond.append.shape()) + ", expected [B," +
                                        std::to_string(cfg_.append_channels) + "," +
                                        std::to_string(x.dim(2)) + "]");
        }
        h = nn::concat_channels(x, cond.append);
    }

    switch (cfg_.transform.kind) {
        case TransformKind::none: break;
        case TransformKind::patch: h = unet::patch_op(h, cfg_.transform.patch_size); break;
        case TransformKind::learned: h = lt_->encode(h); break;
    }

    unet::Conditioning<float> uc;
    uc.features = time_.forward(
        Tensor<float>::from_data({static_cast<int64_t>(levels.size())}, levels));
    uc.embedding = embedding;
    uc.inject = cond.inject;
    auto y = net_.forward(h, uc);

    switch (cfg_.transform.kind) {
        case TransformKind::none: break;
        case TransformKind::patch: y = unet::unpatch_op(y, cfg_.transform.patch_size); break;
        case TransformKind::learned: y = lt_->decode(y); break;
    }
    return y;
}

Tensor<float> DiffusionModel::training_loss(const Batch& batch, Rng& rng,
                                            const ModelConditioning& cond) {
    const int64_t B = batch.batch, C = cfg_.in_channels, T = cfg_.length;
    if (static_cast<int64_t>(batch.samples.size()) != B * C * T) {
        throw std::invalid_argument("model: batch has " + std::to_string(batch.samples.size()) +
                                    " values, expected " + std::to_string(B * C * T));
    }
    if (cfg_.text.enabled && !batch.texts.empty() &&
        static_cast<int64_t>(batch.texts.size()) != B) {
        throw std::invalid_argument("model: texts must be empty or one per batch element");
    }

    const int64_t per = C * T;
    std::vector<float> x_noisy(B * per), target(B * per);
    std::vector<float> levels(B);

    for (int64_t b = 0; b < B; ++b) {
        const float* x0 = batch.samples.data() + b * per;
        if (cfg_.prediction == diffusion::Prediction::v) {
            const double sigma = rng.uniform();
            const double a = diffusion::alpha_sigma(sigma);
            const double bb = diffusion::beta_sigma(sigma);
            levels[b] = static_cast<float>(sigma);
            for (int64_t i = 0; i < per; ++i) {
                const double eps = rng.normal();
                x_noisy[b * per + i] = static_cast<float>(a * x0[i] + bb * eps);
                target[b * per + i] = static_cast<float>(a * eps - bb * x0[i]);
            }
        } else {
            const int t = static_cast<int>(rng.uniform_int(1, cfg_.ddpm_steps));
            const double bar = schedule_.beta_bar(t);
            const double a = std::sqrt(bar);
            const double bb = std::sqrt(1.0 - bar);
            levels[b] = static_cast<float>(static_cast<double>(t) / cfg_.ddpm_steps);
            for (int64_t i = 0; i < per; ++i) {
                const double eps = rng.normal();
                x_noisy[b * per + i] = static_cast<float>(a * x0[i] + bb * eps);
                target[b * per + i] = static_cast<float>(eps);
            }
        }
    }

    Tensor<float> embedding;
    if (cfg_.text.enabled) {
        std::vector<std::string> texts =
            batch.texts.empty() ? std::vector<std::string>(B, std::string()) : batch.texts;
        std::vector<uint8_t> mask(B, 0);
        for (int64_t b = 0; b < B; ++b) {
            mask[b] = rng.bernoulli(cfg_.text.cfg_mask_proba) ? 1 : 0;
        }
        embedding = text_->embed(texts, mask);
    }

    auto x_t = Tensor<float>::from_data({B, C, T}, std::move(x_noisy));
    auto pred = predict(x_t, levels, embedding, cond);
    return nn::mse(pred, Tensor<float>::from_data({B, C, T}, std::move(target)));
}

std::vector<float> DiffusionModel::sample(const std::vector<float>& noise, int64_t batch,
                                          const SampleOptions& opts) {
    const int64_t C = cfg_.in_channels;
    const int64_t T = static_cast<int64_t>(noise.size()) / (batch * C);
    if (static_cast<int64_t>(noise.size()) != batch * C * T || T < 1) {
        throw std::invalid_argument("sample: noise buffer does not match [B, C, T]");
    }
    if (opts.num_steps < 1) throw std::invalid_argument("sample: num_steps must be >= 1");
    if (opts.use_text && !cfg_.text.enabled) {
        throw std::invalid_argument("sample: this model has no text conditioning");
    }

    nn::NoGradGuard inference;

    Tensor<float> emb_cond, emb_masked;
    if (cfg_.text.enabled) {
        emb_masked = text_->masked_batch(batch);
        if (opts.use_text) {
            emb_cond = text_->embed(std::vector<std::string>(batch, opts.text));
        }
    }

    auto run = [&](const std::vector<float>& x, double cond_level) {
        auto x_t = Tensor<float>::from_data({batch, C, T}, x);
        const std::vector<float> levels(batch, static_cast<float>(cond_level));
        if (!cfg_.text.enabled) {
            return predict(x_t, levels, Tensor<float>(), opts.cond).data();
        }
        const double lambda = opts.use_text ? opts.embedding_scale : 0.0;
        if (lambda == 0.0) return predict(x_t, levels, emb_masked, opts.cond).data();
        if (lambda == 1.0) return predict(x_t, levels, emb_cond, opts.cond).data();
        const auto y_m = predict(x_t, levels, emb_masked, opts.cond).data();
        const auto y_e = predict(x_t, levels, emb_cond, opts.cond).data();
        std::vector<float> out(y_m.size());
        for (size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<float>(y_m[i] + (y_e[i] - y_m[i]) * lambda);
        }
        return out;
    };

    if (cfg_.prediction == diffusion::Prediction::v) {
        diffusion::Denoiser<float> f{diffusion::Prediction::v,
                                     [&](const std::vector<float>& x, double sigma) {
                                         return run(x, sigma);
                                     }};
        return diffusion::v_sampler(f, noise, opts.num_steps);
    }

    // eps-predicting model: deterministic DDIM over an even t grid
    diffusion::Denoiser<float> f{diffusion::Prediction::eps,
                                 [&](const std::vector<float>& x, double level) {
                                     return run(x, level / cfg_.ddpm_steps);
                                 }};
    std::vector<int> ts;
    for (int i = 0; i <= opts.num_steps; ++i) {
        const int t = static_cast<int>(std::llround(
            static_cast<double>(cfg_.ddpm_steps) * (opts.num_steps - i) / opts.num_steps));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    std::vector<float> x = noise;
    for (size_t i = 0; i + 1 < ts.size(); ++i) {
        x = diffusion::ddim_sample_step(f, x, ts[i], ts[i + 1], schedule_);
    }
    return x;
}

// ---------------------------------------------------------------------------
// metadata augmentation

std::string metadata_to_text(const TrackMetadata& meta, int chunk_idx, int chunk_total, Rng& rng,
                             const MetadataAugmentOptions& opts) {
    if (chunk_idx < 1 || chunk_idx > chunk_total) {
        throw std::invalid_argument("metadata_to_text: chunk index outside [1, total]");
    }
    std::vector<std::string> fields;
    for (const auto* f : {&meta.title, &meta.artist, &meta.album, &meta.genre, &meta.year}) {
        if (!f->empty()) fields.push_back(*f);
    }
    if (opts.shuffle) {
        for (size_t i = fields.size(); i > 1; --i) {
            const auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(fields[i - 1], fields[j]);
        }
    }
    std::vector<std::string> kept;
    for (auto& f : fields) {
        if (!(rng.uniform() < opts.drop_proba)) kept.push_back(std::move(f));
    }
    // the chunk indicator is structural and never dropped
    kept.push_back(std::to_string(chunk_idx) + " of " + std::to_string(chunk_total));

    const bool comma = opts.comma_join ? *opts.comma_join : rng.bernoulli(0.5);
    const std::string sep = comma ? ", " : " ";
    std::string out;
    for (size_t i = 0; i < kept.size(); ++i) {
        if (i) out += sep;
        out += kept[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// bottlenecks

BottleneckResult bottleneck_apply(BottleneckKind kind, const Tensor<float>& pre_latent, Rng* rng,
                                  const Tensor<float>* codebook) {
    if (pre_latent.rank() != 3) throw std::invalid_argument("bottleneck: expected [B, Z, L]");
    BottleneckResult out;
    switch (kind) {
        case BottleneckKind::tanh_squash: {
            out.latent = nn::tanh_op(pre_latent);
            return out;
        }
        case BottleneckKind::variational: {
            const int64_t C = pre_latent.dim(1);
            if (C % 2 != 0) {
                throw std::invalid_argument("variational bottleneck needs an even channel count");
            }
            const int64_t Z = C / 2;
            auto mu = nn::slice_channels(pre_latent, 0, Z);
            auto logvar = nn::slice_channels(pre_latent, Z, C);
            auto sd = nn::exp_op(nn::scale(logvar, 0.5f));
            Tensor<float> eps;
            if (rng) {
                eps = Tensor<float>::randn(mu.shape(), *rng);
            } else {
                eps = Tensor<float>::zeros(mu.shape());  // deterministic eval: z = mu
            }
            out.latent = nn::add(mu, nn::mul(sd, eps));
            // KL(N(mu, sd) || N(0, 1)) averaged over elements
            auto term = nn::sub(nn::sub(nn::add_scalar(logvar, 1.0f), nn::mul(mu, mu)),
                                nn::exp_op(logvar));
            out.aux_loss = nn::scale(nn::mean(term), -0.5f);
            return out;
        }
        case BottleneckKind::quantizer: {
            if (!codebook) throw std::invalid_argument("quantizer bottleneck needs a codebook");
            const int64_t B = pre_latent.dim(0), Z = pre_latent.dim(1), L = pre_latent.dim(2);
            if (codebook->dim(1) != Z) {
                throw std::invalid_argument("quantizer: codebook dim mismatch");
            }
            const int64_t K = codebook->dim(0);
            std::vector<int64_t> idx(B * L, 0);
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t l = 0; l < L; ++l) {
                    double best = 0.0;
                    int64_t arg = 0;
                    for (int64_t k = 0; k < K; ++k) {
                        double d2 = 0.0;
                        for (int64_t z = 0; z < Z; ++z) {
                            const double d = pre_latent.data()[(b * Z + z) * L + l] -
                                             codebook->data()[k * Z + z];
                            d2 += d * d;
                        }
                        if (k == 0 || d2 < best) {
                            best = d2;
                            arg = k;
                        }
                    }
                    idx[b * L + l] = arg;
                }
            }
            auto q = nn::transpose_last2(nn::embedding_lookup(*codebook, idx, B, L));  // [B,Z,L]
            // straight-through estimator
            out.latent = nn::add(pre_latent, nn::detach(nn::sub(q, pre_latent)));
            auto commit = nn::sub(pre_latent, nn::detach(q));
            auto codeterm = nn::sub(nn::detach(pre_latent), q);
            out.aux_loss =
                nn::add(nn::mean(nn::mul(commit, commit)), nn::mean(nn::mul(codeterm, codeterm)));
            return out;
        }
    }
    throw std::logic_error("unreachable bottleneck kind");
}

// ---------------------------------------------------------------------------
// autoencoder

AutoencoderModel::AutoencoderModel(const AutoencoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.decoder.in_channels != 1) {
        throw std::invalid_argument("autoencoder: mono decoder expected (batch stereo channels)");
    }
    if (cfg_.decoder.length % latent_hop() != 0) {
        throw std::invalid_argument("autoencoder: length " + std::to_string(cfg_.decoder.length) +
                                    " not divisible by the latent hop " +
                                    std::to_string(latent_hop()));
    }

    // locate the decoder level whose item length equals the latent length
    int64_t cumulative = cfg_.decoder.transform.total_stride();
    for (size_t i = 0; i < cfg_.decoder.factors.size(); ++i) {
        cumulative *= cfg_.decoder.factors[i];
        if (cumulative == latent_hop()) {
            inject_level_ = static_cast<int>(i);
            break;
        }
    }
    if (inject_level_ < 0) {
        throw std::invalid_argument(
            "autoencoder: no decoder level matches the latent length; transform stride times the "
            "cumulative factors must reach " +
            std::to_string(latent_hop()));
    }

    auto dec_cfg = cfg_.decoder;
    dec_cfg.inject_channels[inject_level_] = cfg_.latent_channels;
    decoder_ = std::make_unique<DiffusionModel>(dec_cfg, seed);

    auto& reg = decoder_->parameters();
    Rng rng(seed ^ 0x5EEDAE);
    const int64_t hidden = cfg_.encoder_hidden;
    const int64_t out_ch = cfg_.bottleneck == BottleneckKind::variational
                               ? 2 * cfg_.latent_channels
                               : cfg_.latent_channels;
    enc_in_ = nn::Conv1d<float>(reg, "enc.in", cfg_.mel.num_mels, hidden, 3, 1, 1, rng);
    for (int d = 0; d < cfg_.temporal_downsample; ++d) {
        enc_down_.emplace_back(reg, "enc.down" + std::to_string(d), hidden, hidden, 4, 2, 1, rng);
    }
    enc_out_ = nn::Conv1d<float>(reg, "enc.out", hidden, out_ch, 3, 1, 1, rng);
    if (cfg_.bottleneck == BottleneckKind::quantizer) {
        codebook_ = reg.create("enc.codebook", {cfg_.quantizer_codes, cfg_.latent_channels},
                               nn::Init::normal, rng);
    }
}

Tensor<float> AutoencoderModel::mel_tensor(const Batch& batch) const {
    const int64_t B = batch.batch, T = cfg_.decoder.length;
    const int64_t Lmel = T / cfg_.mel.hop;
    std::vector<float> data(B * cfg_.mel.num_mels * Lmel);
    for (int64_t b = 0; b < B; ++b) {
        const auto w = floats_to_waveform(batch.samples.data() + b * T, 1, T,
                                          cfg_.decoder.sample_rate);
        const auto mel = signal::mel_spectrogram(w, cfg_.mel);
        if (mel.num_frames != Lmel) {
            throw std::logic_error("autoencoder: unexpected mel frame count");
        }
        for (int m = 0; m < cfg_.mel.num_mels; ++m) {
            for (int64_t l = 0; l < Lmel; ++l) {
                data[(b * cfg_.mel.num_mels + m) * Lmel + l] =
                    static_cast<float>(std::log1p(mel.at(0, m, l)));
            }
        }
    }
    return Tensor<float>::from_data({B, cfg_.mel.num_mels, Lmel}, std::move(data));
}

BottleneckResult AutoencoderModel::encode_tensor(const Tensor<float>& mel_batch, Rng* rng) {
    auto h = nn::silu(enc_in_.forward(mel_batch));
    for (const auto& down : enc_down_) h = nn::silu(down.forward(h));
    auto pre = enc_out_.forward(h);
    return bottleneck_apply(cfg_.bottleneck, pre, rng,
                            codebook_.defined() ? &codebook_ : nullptr);
}

std::vector<float> AutoencoderModel::encode(const signal::Waveform& w) {
    if (w.samples % latent_hop() != 0) {
        throw std::invalid_argument("autoencoder encode: length " + std::to_string(w.samples) +
                                    " not divisible by " + std::to_string(latent_hop()));
    }
    if (w.channels != 1) {
        throw std::invalid_argument("autoencoder encode: expected mono input");
    }
    nn::NoGradGuard inference;
    Batch batch;
    batch.batch = 1;
    batch.samples = waveform_to_floats(w);

    // mel_tensor is sized by the configured length; rebuild for this input
    const int64_t T = w.samples;
    const int64_t Lmel = T / cfg_.mel.hop;
    const auto mel = signal::mel_spectrogram(w, cfg_.mel);
    std::vector<float> data(cfg_.mel.num_mels * Lmel);
    for (int m = 0; m < cfg_.mel.num_mels; ++m) {
        for (int64_t l = 0; l < Lmel; ++l) {
            data[m * Lmel + l] = static_cast<float>(std::log1p(mel.at(0, m, l)));
        }
    }
    auto mel_t = Tensor<float>::from_data({1, cfg_.mel.num_mels, Lmel}, std::move(data));
    return encode_tensor(mel_t, nullptr).latent.data();
}

std::vector<float> AutoencoderModel::decode(const std::vector<float>& latent, int64_t batch,
                                            int64_t latent_len, int num_steps,
                                            const std::vector<float>& noise) {
    if (static_cast<int64_t>(latent.size()) != batch * cfg_.latent_channels * latent_len) {
        throw std::invalid_argument("autoencoder decode: latent buffer size mismatch");
    }
    const int64_t T = latent_len * latent_hop();
    if (static_cast<int64_t>(noise.size()) != batch * T) {
        throw std::invalid_argument("autoencoder decode: noise must be [B, 1, " +
                                    std::to_string(T) + "]");
    }
    SampleOptions opts;
    opts.num_steps = num_steps;
    opts.cond.inject[inject_level_] =
        Tensor<float>::from_data({batch, cfg_.latent_channels, latent_len}, latent);
    return decoder_->sample(noise, batch, opts);
}

Tensor<float> AutoencoderModel::training_loss(const Batch& batch, Rng& rng) {
    auto mel = mel_tensor(batch);
    auto enc = encode_tensor(mel, &rng);
    ModelConditioning cond;
    cond.inject[inject_level_] = enc.latent;
    auto loss = decoder_->training_loss(batch, rng, cond);
    if (enc.aux_loss.defined()) {
        loss = nn::add(loss, nn::scale(enc.aux_loss, cfg_.aux_loss_weight));
    }
    return loss;
}

// ---------------------------------------------------------------------------
// upsampler

std::vector<double> decimate(const std::vector<double>& x, int64_t channels, int64_t samples,
                             int factor) {
    if (factor < 2) throw std::invalid_argument("decimate: factor must be >= 2");
    if (samples % factor != 0) {
        throw std::invalid_argument("decimate: length not divisible by the rate factor");
    }
    // windowed-sinc low-pass at 0.45 of the target Nyquist, unit DC gain
    const int taps = 16 * factor + 1;
    const int center = taps / 2;
    const double fc = 0.45 / factor;
    std::vector<double> h(taps);
    double sum = 0.0;
    for (int n = 0; n < taps; ++n) {
        const double t = n - center;
        const double sinc = t == 0.0 ? 1.0 : std::sin(2.0 * kPi * fc * t) / (2.0 * kPi * fc * t);
        const double win = 0.5 * (1.0 - std::cos(2.0 * kPi * n / (taps - 1)));
        h[n] = 2.0 * fc * sinc * win;
        sum += h[n];
    }
    for (auto& v : h) v /= sum;

    const int64_t out_len = samples / factor;
    std::vector<double> out(channels * out_len);
    for (int64_t c = 0; c < channels; ++c) {
        const double* src = x.data() + c * samples;
        for (int64_t k = 0; k < out_len; ++k) {
            const int64_t t0 = k * factor;
            double acc = 0.0;
            for (int n = 0; n < taps; ++n) {
                int64_t t = t0 + n - center;
                if (t < 0) t = -t;  // reflect
                if (t >= samples) t = 2 * samples - 2 - t;
                acc += h[n] * src[t];
            }
            out[c * out_len + k] = acc;
        }
    }
    return out;
}

std::vector<double> interpolate_linear(const std::vector<double>& x, int64_t channels,
                                       int64_t samples, int64_t out_len) {
    std::vector<double> out(channels * out_len);
    for (int64_t c = 0; c < channels; ++c) {
        const double* src = x.data() + c * samples;
        for (int64_t t = 0; t < out_len; ++t) {
            const double pos = static_cast<double>(t) * samples / out_len;
            const int64_t i0 = std::min<int64_t>(static_cast<int64_t>(pos), samples - 1);
            const int64_t i1 = std::min<int64_t>(i0 + 1, samples - 1);
            const double frac = pos - static_cast<double>(i0);
            out[c * out_len + t] = (1.0 - frac) * src[i0] + frac * src[i1];
        }
    }
    return out;
}

UpsamplerModel::UpsamplerModel(const UpsamplerConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.rate_factor < 2) throw std::invalid_argument("upsampler: rate_factor must be >= 2");
    if (cfg_.base.length % cfg_.rate_factor != 0) {
        throw std::invalid_argument("upsampler: length not divisible by the rate factor");
    }
    auto base = cfg_.base;
    base.append_channels = base.in_channels;
    core_ = std::make_unique<DiffusionModel>(base, seed);
}

Tensor<float> UpsamplerModel::training_loss(const Batch& batch, Rng& rng) {
    const int64_t B = batch.batch, C = cfg_.base.in_channels, T = cfg_.base.length;
    if (static_cast<int64_t>(batch.samples.size()) != B * C * T) {
        throw std::invalid_argument("upsampler: batch size mismatch");
    }
    std::vector<float> append(B * C * T);
    for (int64_t b = 0; b < B; ++b) {
        std::vector<double> high(C * T);
        for (int64_t i = 0; i < C * T; ++i) high[i] = batch.samples[b * C * T + i];
        const auto low = decimate(high, C, T, cfg_.rate_factor);
        const auto up = interpolate_linear(low, C, T / cfg_.rate_factor, T);
        for (int64_t i = 0; i < C * T; ++i) append[b * C * T + i] = static_cast<float>(up[i]);
    }
    ModelConditioning cond;
    cond.append = Tensor<float>::from_data({B, C, T}, std::move(append));
    return core_->training_loss(batch, rng, cond);
}

std::vector<float> UpsamplerModel::sample(const std::vector<float>& x_low, int64_t batch,
                                          int num_steps, const std::vector<float>& noise) {
    const int64_t C = cfg_.base.in_channels, T = cfg_.base.length;
    const int64_t Tl = T / cfg_.rate_factor;
    if (static_cast<int64_t>(x_low.size()) != batch * C * Tl) {
        throw std::invalid_argument("upsampler sample: x_low must be [B, C, T/" +
                                    std::to_string(cfg_.rate_factor) + "]");
    }
    if (static_cast<int64_t>(noise.size()) != batch * C * T) {
        throw std::invalid_argument("upsampler sample: noise must be [B, C, T]");
    }
    std::vector<float> append(batch * C * T);
    for (int64_t b = 0; b < batch; ++b) {
        std::vector<double> low(C * Tl);
        for (int64_t i = 0; i < C * Tl; ++i) low[i] = x_low[b * C * Tl + i];
        const auto up = interpolate_linear(low, C, Tl, T);
        for (int64_t i = 0; i < C * T; ++i) append[b * C * T + i] = static_cast<float>(up[i]);
    }
    SampleOptions opts;
    opts.num_steps = num_steps;
    opts.cond.append = Tensor<float>::from_data({batch, C, T}, std::move(append));
    return core_->sample(noise, batch, opts);
}

// ---------------------------------------------------------------------------
// vocoder

VocoderModel::VocoderModel(const VocoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.base.in_channels != 1) {
        throw std::invalid_argument("vocoder: mono model expected (batch stereo channels)");
    }
    if (cfg_.base.length % cfg_.mel.hop != 0) {
        throw std::invalid_argument("vocoder: length not divisible by the mel hop");
    }
    auto base = cfg_.base;
    base.append_channels = 1;
    core_ = std::make_unique<DiffusionModel>(base, seed);
    Rng rng(seed ^ 0xF1A77E4);
    // kernel = stft window, stride = hop: the transposed conv focuses on the
    // same waveform context each frame was computed from
    flatten_ = nn::ConvTranspose1d<float>(core_->parameters(), "vocoder.flatten",
                                          cfg_.mel.num_mels, 1, cfg_.mel.num_fft, cfg_.mel.hop, 0,
                                          rng);
}

Tensor<float> VocoderModel::flatten(const Tensor<float>& mel_batch, int64_t target_len) {
    auto y = flatten_.forward(mel_batch);  // [B, 1, (L-1)*hop + num_fft]
    const int64_t offset = cfg_.mel.num_fft / 2;  // frames are centered
    if (y.dim(2) < offset + target_len) {
        throw std::invalid_argument("vocoder: mel too short to cover " +
                                    std::to_string(target_len) + " samples");
    }
    return nn::crop_length(y, offset, target_len);
}

Tensor<float> VocoderModel::training_loss(const Batch& batch, Rng& rng) {
    const int64_t B = batch.batch, T = cfg_.base.length;
    if (static_cast<int64_t>(batch.samples.size()) != B * T) {
        throw std::invalid_argument("vocoder: batch size mismatch");
    }
    const int64_t Lmel = T / cfg_.mel.hop;
    std::vector<float> mel_data(B * cfg_.mel.num_mels * Lmel);
    for (int64_t b = 0; b < B; ++b) {
        const auto w =
            floats_to_waveform(batch.samples.data() + b * T, 1, T, cfg_.base.sample_rate);
        const auto mel = signal::mel_spectrogram(w, cfg_.mel);
        for (int m = 0; m < cfg_.mel.num_mels; ++m) {
            for (int64_t l = 0; l < Lmel; ++l) {
                mel_data[(b * cfg_.mel.num_mels + m) * Lmel + l] =
                    static_cast<float>(std::log1p(mel.at(0, m, l)));
            }
        }
    }
    auto mel_t = Tensor<float>::from_data({B, cfg_.mel.num_mels, Lmel}, std::move(mel_data));
    ModelConditioning cond;
    cond.append = flatten(mel_t, T);
    return core_->training_loss(batch, rng, cond);
}

std::vector<float> VocoderModel::sample(const std::vector<float>& mel, int64_t batch,
                                        int64_t mel_frames, int num_steps,
                                        const std::vector<float>& noise) {
    if (static_cast<int64_t>(mel.size()) != batch * cfg_.mel.num_mels * mel_frames) {
        throw std::invalid_argument("vocoder sample: mel must be [B, " +
                                    std::to_string(cfg_.mel.num_mels) + ", L]; check that the mel "
                                    "configuration matches the model");
    }
    const int64_t T = mel_frames * cfg_.mel.hop;
    if (static_cast<int64_t>(noise.size()) != batch * T) {
        throw std::invalid_argument("vocoder sample: noise must be [B, 1, L*hop]");
    }
    nn::NoGradGuard inference;
    std::vector<float> compressed(mel.size());
    for (size_t i = 0; i < mel.size(); ++i) {
        compressed[i] = std::log1p(std::max(0.0f, mel[i]));  // same scaling as training
    }
    SampleOptions opts;
    opts.num_steps = num_steps;
    opts.cond.append = flatten(
        Tensor<float>::from_data({batch, cfg_.mel.num_mels, mel_frames}, std::move(compressed)),
        T);
    return core_->sample(noise, batch, opts);
}

// ---------------------------------------------------------------------------
// latent pipeline

LatentPipeline::LatentPipeline(DiffusionModel& text_generator, AutoencoderModel& autoencoder)
    : gen_(&text_generator), ae_(&autoencoder) {
    if (!gen_->config().text.enabled) {
        throw std::invalid_argument("latent pipeline: stage 1 must be text-conditional");
    }
    if (gen_->config().in_channels != ae_->config().latent_channels) {
        throw std::invalid_argument(
            "latent pipeline: stage-1 channels " + std::to_string(gen_->config().in_channels) +
            " do not match the latent channels " +
            std::to_string(ae_->config().latent_channels));
    }
    latent_len_ = gen_->config().length;
    if (ae_->config().decoder.length != latent_len_ * ae_->latent_hop()) {
        throw std::invalid_argument("latent pipeline: stage lengths do not compose");
    }
}

std::vector<float> LatentPipeline::sample(const std::string& text, double embedding_scale,
                                          const std::vector<float>& noise_latent,
                                          const std::vector<float>& noise_audio, int latent_steps,
                                          int decode_steps) {
    SampleOptions opts;
    opts.num_steps = latent_steps;
    opts.use_text = true;
    opts.text = text;
    opts.embedding_scale = embedding_scale;
    auto latent = gen_->sample(noise_latent, 1, opts);
    // keep the latent inside the tanh training range before decoding
    constexpr float bound = 1.0f - 1e-6f;
    for (auto& v : latent) v = std::clamp(v, -bound, bound);
    return ae_->decode(latent, 1, latent_len_, decode_steps, noise_audio);
}

}  // namespace wavediff::models
