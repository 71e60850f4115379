// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wavediff/fft.hpp"

namespace wavediff::signal {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
    }
}

// reflect index (no edge repeat) into [0, n)
int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace

std::vector<double> hann_window(int size) {
    if (size < 1) throw std::invalid_argument("hann_window: size must be >= 1");
    std::vector<double> w(size);
    for (int n = 0; n < size; ++n) {
        w[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / static_cast<double>(size)));
    }
    return w;
}

ComplexSpectrogram stft(const Waveform& w, int num_fft, int hop, const std::vector<double>& window) {
    if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
    if (hop > num_fft) throw std::invalid_argument("stft: hop > num_fft");
    if (static_cast<int>(window.size()) != num_fft) {
        throw std::invalid_argument("stft: window length must equal num_fft");
    }
    if (!fft::is_power_of_two(static_cast<size_t>(num_fft))) {
        throw std::invalid_argument("stft: num_fft must be a power of two");
    }
    if (w.channels < 1 || w.samples < num_fft) {
        throw std::invalid_argument("stft: need at least num_fft samples");
    }
    check_finite(w.data, "stft");

    const int64_t T = w.samples;
    const int64_t L = (T + hop - 1) / hop;
    const int F = num_fft / 2 + 1;

    ComplexSpectrogram out;
    out.channels = w.channels;
    out.bins = F;
    out.num_frames = L;
    out.num_fft = num_fft;
    out.hop = hop;
    out.data.resize(static_cast<size_t>(w.channels) * F * L);

    std::vector<std::complex<double>> frame(num_fft);
    for (int c = 0; c < w.channels; ++c) {
        for (int64_t l = 0; l < L; ++l) {
            const int64_t start = l * hop - num_fft / 2;  // center at l*hop
            for (int n = 0; n < num_fft; ++n) {
                const int64_t t = reflect_index(start + n, T);
                frame[n] = w.at(c, t) * window[n];
            }
            fft::forward(frame);
            for (int f = 0; f < F; ++f) out.at(c, f, l) = frame[f];
        }
    }
    return out;
}

ComplexSpectrogram stft(const Waveform& w, int num_fft, int hop) {
    return stft(w, num_fft, hop, hann_window(num_fft));
}

Waveform istft(const ComplexSpectrogram& s, const std::vector<double>& window, int64_t target_len,
               int sample_rate) {
    const int W = s.num_fft;
    const int hop = s.hop;
    if (static_cast<int>(window.size()) != W) {
        throw std::invalid_argument("istft: window length must equal num_fft");
    }
    if (s.bins != W / 2 + 1) throw std::invalid_argument("istft: bins != num_fft/2 + 1");
    if (target_len < 1) throw std::invalid_argument("istft: target_len must be >= 1");

    const int64_t L = s.num_frames;
    const int64_t padded = (L - 1) * hop + W;  // OLA axis, origin at sample -W/2
    std::vector<double> acc(padded, 0.0);
    std::vector<double> norm(padded, 0.0);

    Waveform out(s.channels, target_len, sample_rate);

    std::vector<std::complex<double>> frame(W);
    for (int c = 0; c < s.channels; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        if (c == 0) {
            for (int64_t l = 0; l < L; ++l) {
                for (int n = 0; n < W; ++n) norm[l * hop + n] += window[n] * window[n];
            }
        }
        for (int64_t l = 0; l < L; ++l) {
            for (int f = 0; f < s.bins; ++f) frame[f] = s.at(c, f, l);
            for (int f = s.bins; f < W; ++f) frame[f] = std::conj(s.at(c, W - f, l));
            fft::inverse(frame);
            const int64_t base = l * hop;
            for (int n = 0; n < W; ++n) acc[base + n] += frame[n].real() * window[n];
        }
        const int64_t half = W / 2;
        for (int64_t t = 0; t < target_len; ++t) {
            const int64_t p = t + half;
            if (p >= padded) {
                out.at(c, t) = 0.0;  // beyond frame coverage
                continue;
            }
            if (norm[p] < 1e-8) {
                throw std::invalid_argument(
                    "istft: window overlap-add normalizer below 1e-8 (COLA violated; "
                    "hop too large for this window)");
            }
            out.at(c, t) = acc[p] / norm[p];
        }
    }
    return out;
}

Waveform istft(const ComplexSpectrogram& s, int64_t target_len, int sample_rate) {
    return istft(s, hann_window(s.num_fft), target_len, sample_rate);
}

MagPhase to_mag_phase(const ComplexSpectrogram& s) {
    MagPhase mp;
    mp.channels = s.channels;
    mp.bins = s.bins;
    mp.num_frames = s.num_frames;
    mp.num_fft = s.num_fft;
    mp.hop = s.hop;
    mp.magnitude.resize(s.data.size());
    mp.phase.resize(s.data.size());
    for (size_t i = 0; i < s.data.size(); ++i) {
        const std::complex<double> z = s.data[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
            throw std::invalid_argument("to_mag_phase: non-finite input");
        }
        const double m = std::abs(z);
        mp.magnitude[i] = m;
        mp.phase[i] = m == 0.0 ? 0.0 : std::atan2(z.imag(), z.real());
    }
    return mp;
}

ComplexSpectrogram from_mag_phase(const MagPhase& mp) {
    ComplexSpectrogram s;
    s.channels = mp.channels;
    s.bins = mp.bins;
    s.num_frames = mp.num_frames;
    s.num_fft = mp.num_fft;
    s.hop = mp.hop;
    s.data.resize(mp.magnitude.size());
    for (size_t i = 0; i < s.data.size(); ++i) {
        s.data[i] = std::polar(mp.magnitude[i], mp.phase[i]);
    }
    return s;
}

double hz_to_mel(double hz) {
    if (hz < 0.0) throw std::invalid_argument("hz_to_mel: negative frequency");
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    if (mel < 0.0) throw std::invalid_argument("mel_to_hz: negative mel");
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_filter_centers(int num_mels, double fmin, double fmax) {
    const double mlo = hz_to_mel(fmin);
    const double mhi = hz_to_mel(fmax);
    std::vector<double> centers(num_mels);
    for (int m = 1; m <= num_mels; ++m) {
        centers[m - 1] = mel_to_hz(mlo + (mhi - mlo) * m / static_cast<double>(num_mels + 1));
    }
    return centers;
}

std::vector<double> mel_filterbank(int num_fft, int num_mels, double fmin, double fmax,
                                   int sample_rate) {
    if (num_mels < 1) throw std::invalid_argument("mel_filterbank: num_mels must be >= 1");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
        throw std::invalid_argument("mel_filterbank: need 0 <= fmin < fmax <= sample_rate/2");
    }

    const int F = num_fft / 2 + 1;
    const double mlo = hz_to_mel(fmin);
    const double mhi = hz_to_mel(fmax);

    std::vector<double> edges(num_mels + 2);
    for (int i = 0; i < num_mels + 2; ++i) {
        edges[i] = mel_to_hz(mlo + (mhi - mlo) * i / static_cast<double>(num_mels + 1));
    }
    edges[0] = fmin;  // pin endpoints; the mel round trip can drift by an ulp
    edges[num_mels + 1] = fmax;

    const double bin_hz = static_cast<double>(sample_rate) / num_fft;
    std::vector<double> fb(static_cast<size_t>(num_mels) * F, 0.0);
    for (int m = 0; m < num_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        bool any = false;
        for (int k = 0; k < F; ++k) {
            const double f = k * bin_hz;
            if (f <= left || f >= right) continue;
            const double rising = (f - left) / (center - left);
            const double falling = (right - f) / (right - center);
            const double weight = std::max(0.0, std::min(rising, falling));
            fb[static_cast<size_t>(m) * F + k] = weight;
            any = any || weight > 0.0;
        }
        if (!any) {
            throw std::invalid_argument(
                "mel_filterbank: filter " + std::to_string(m) +
                " has no support on the FFT grid (adjacent centers collide); reduce num_mels "
                "or increase num_fft");
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
    const double fmax = cfg.fmax > 0.0 ? cfg.fmax : w.sample_rate / 2.0;
    const auto spec = stft(w, cfg.num_fft, cfg.hop);
    const auto mp = to_mag_phase(spec);
    const auto fb = mel_filterbank(cfg.num_fft, cfg.num_mels, cfg.fmin, fmax, w.sample_rate);

    MelSpectrogram mel;
    mel.channels = w.channels;
    mel.num_mels = cfg.num_mels;
    mel.num_frames = spec.num_frames;
    mel.fmin = cfg.fmin;
    mel.fmax = fmax;
    mel.num_fft = cfg.num_fft;
    mel.hop = cfg.hop;
    mel.sample_rate = w.sample_rate;
    mel.data.assign(static_cast<size_t>(w.channels) * cfg.num_mels * spec.num_frames, 0.0);

    const int F = spec.bins;
    for (int c = 0; c < w.channels; ++c) {
        for (int m = 0; m < cfg.num_mels; ++m) {
            for (int64_t l = 0; l < spec.num_frames; ++l) {
                double acc = 0.0;
                for (int k = 0; k < F; ++k) {
                    const double weight = fb[static_cast<size_t>(m) * F + k];
                    if (weight != 0.0) acc += weight * mp.magnitude[mp.index(c, k, l)];
                }
                mel.at(c, m, l) = acc;
            }
        }
    }
    return mel;
}

PatchedSignal patch(const Waveform& w, int patch_size) {
    if (patch_size < 1) throw std::invalid_argument("patch: patch_size must be >= 1");
    if (w.samples % patch_size != 0) {
        throw std::invalid_argument("patch: length " + std::to_string(w.samples) +
                                    " not divisible by patch size " + std::to_string(patch_size));
    }
    PatchedSignal ps;
    ps.patch_size = patch_size;
    ps.orig_channels = w.channels;
    ps.channels = w.channels * patch_size;
    ps.steps = w.samples / patch_size;
    ps.sample_rate = w.sample_rate;
    ps.data.resize(w.data.size());
    for (int c = 0; c < w.channels; ++c) {
        for (int j = 0; j < patch_size; ++j) {
            for (int64_t t = 0; t < ps.steps; ++t) {
                ps.at(c * patch_size + j, t) = w.at(c, t * patch_size + j);
            }
        }
    }
    return ps;
}

Waveform unpatch(const PatchedSignal& ps) {
    Waveform w(ps.orig_channels, ps.steps * ps.patch_size, ps.sample_rate);
    for (int c = 0; c < ps.orig_channels; ++c) {
        for (int j = 0; j < ps.patch_size; ++j) {
            for (int64_t t = 0; t < ps.steps; ++t) {
                w.at(c, t * ps.patch_size + j) = ps.at(c * ps.patch_size + j, t);
            }
        }
    }
    return w;
}

}  // namespace wavediff::signal
