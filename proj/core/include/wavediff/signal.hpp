// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_SIGNAL_HPP
#define WAVEDIFF_SIGNAL_HPP

#include <complex>
#include <cstdint>
#include <vector>

namespace wavediff::signal {

/// Multichannel audio, data laid out [C, T] row-major, values nominally in [-1, 1].
struct Waveform {
    std::vector<double> data;
    int channels = 0;
    int64_t samples = 0;  // T, per channel
    int sample_rate = 0;

    Waveform() = default;
    Waveform(int channels_, int64_t samples_, int sample_rate_)
        : data(static_cast<size_t>(channels_) * static_cast<size_t>(samples_), 0.0),
          channels(channels_),
          samples(samples_),
          sample_rate(sample_rate_) {}

    double& at(int c, int64_t t) { return data[static_cast<size_t>(c) * samples + t]; }
    double at(int c, int64_t t) const { return data[static_cast<size_t>(c) * samples + t]; }
};

/// One-sided STFT, data laid out [C, F, L] row-major with F = num_fft/2 + 1.
struct ComplexSpectrogram {
    std::vector<std::complex<double>> data;
    int channels = 0;
    int bins = 0;            // F
    int64_t num_frames = 0;  // L
    int num_fft = 0;
    int hop = 0;

    std::complex<double>& at(int c, int f, int64_t l) {
        return data[(static_cast<size_t>(c) * bins + f) * num_frames + l];
    }
    std::complex<double> at(int c, int f, int64_t l) const {
        return data[(static_cast<size_t>(c) * bins + f) * num_frames + l];
    }
};

/// Amplitude |X| and phase in (-pi, pi]; power |X|^2 exposed as an accessor.
struct MagPhase {
    std::vector<double> magnitude;
    std::vector<double> phase;
    int channels = 0;
    int bins = 0;
    int64_t num_frames = 0;
    int num_fft = 0;
    int hop = 0;

    size_t index(int c, int f, int64_t l) const {
        return (static_cast<size_t>(c) * bins + f) * num_frames + l;
    }
    double power(int c, int f, int64_t l) const {
        const double m = magnitude[index(c, f, l)];
        return m * m;
    }
};

struct MelConfig {
    int num_fft = 1024;
    int hop = 256;
    int num_mels = 80;
    double fmin = 0.0;
    double fmax = 0.0;  // 0 -> sample_rate / 2
};

/// Mel-filtered magnitudes, data laid out [C, M, L].
struct MelSpectrogram {
    std::vector<double> data;
    int channels = 0;
    int num_mels = 0;
    int64_t num_frames = 0;
    double fmin = 0.0;
    double fmax = 0.0;
    int num_fft = 0;
    int hop = 0;
    int sample_rate = 0;

    double& at(int c, int m, int64_t l) {
        return data[(static_cast<size_t>(c) * num_mels + m) * num_frames + l];
    }
    double at(int c, int m, int64_t l) const {
        return data[(static_cast<size_t>(c) * num_mels + m) * num_frames + l];
    }
};

/// Chunk-to-channel reshaped waveform: [C*p, T/p].
struct PatchedSignal {
    std::vector<double> data;
    int channels = 0;        // C * p
    int64_t steps = 0;       // T / p
    int patch_size = 1;
    int orig_channels = 0;
    int sample_rate = 0;

    double& at(int c, int64_t t) { return data[static_cast<size_t>(c) * steps + t]; }
    double at(int c, int64_t t) const { return data[static_cast<size_t>(c) * steps + t]; }
};

/// Periodic Hann window of the given size.
std::vector<double> hann_window(int size);

/// Center-padded (reflect) one-sided STFT; L = ceil(T / hop).
ComplexSpectrogram stft(const Waveform& w, int num_fft, int hop, const std::vector<double>& window);
ComplexSpectrogram stft(const Waveform& w, int num_fft = 1024, int hop = 256);

/// Overlap-add inverse with window-square normalization. Rejects hops whose
/// accumulated window energy drops below 1e-8 anywhere in the output range.
Waveform istft(const ComplexSpectrogram& s, const std::vector<double>& window, int64_t target_len,
               int sample_rate);
Waveform istft(const ComplexSpectrogram& s, int64_t target_len, int sample_rate);

MagPhase to_mag_phase(const ComplexSpectrogram& s);
ComplexSpectrogram from_mag_phase(const MagPhase& mp);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with unit peak, centers equally spaced on the mel scale,
/// support strictly inside [fmin, fmax]. Row-major [M, F].
std::vector<double> mel_filterbank(int num_fft, int num_mels, double fmin, double fmax,
                                   int sample_rate);

/// Hz center frequencies of the filters produced by mel_filterbank.
std::vector<double> mel_filter_centers(int num_mels, double fmin, double fmax);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

PatchedSignal patch(const Waveform& w, int patch_size);
Waveform unpatch(const PatchedSignal& ps);

}  // namespace wavediff::signal

#endif  // WAVEDIFF_SIGNAL_HPP
