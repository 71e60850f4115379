// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/wav_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace wavediff::wav {

namespace {

// this codebase targets little-endian hosts; fixed-width copies keep the
// on-disk format explicit
template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("wav: truncated file");
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

struct FmtChunk {
    uint16_t format = 0;
    uint16_t channels = 0;
    uint32_t sample_rate = 0;
    uint16_t bits = 0;
};

}  // namespace

signal::Waveform read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("wav: cannot open " + path);

    char riff[4], wave[4];
    in.read(riff, 4);
    (void)read_le<uint32_t>(in);  // riff size
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
        throw std::runtime_error("wav: " + path + " is not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    std::vector<char> payload;

    while (in) {
        char id[4];
        in.read(id, 4);
        if (!in) break;
        const auto size = read_le<uint32_t>(in);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            fmt.format = read_le<uint16_t>(in);
            fmt.channels = read_le<uint16_t>(in);
            fmt.sample_rate = read_le<uint32_t>(in);
            (void)read_le<uint32_t>(in);  // byte rate
            (void)read_le<uint16_t>(in);  // block align
            fmt.bits = read_le<uint16_t>(in);
            if (size > 16) in.seekg(size - 16 + (size & 1), std::ios::cur);
            if (fmt.format == 0xFFFE) {
                throw std::runtime_error("wav: WAVE_FORMAT_EXTENSIBLE not supported");
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            payload.resize(size);
            in.read(payload.data(), size);
            if (!in) throw std::runtime_error("wav: truncated data chunk in " + path);
            break;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }

    if (!have_fmt) throw std::runtime_error("wav: missing fmt chunk in " + path);
    if (payload.empty()) throw std::runtime_error("wav: missing data chunk in " + path);
    if (fmt.channels < 1) throw std::runtime_error("wav: zero channels in " + path);

    const bool pcm16 = fmt.format == 1 && fmt.bits == 16;
    const bool f32 = fmt.format == 3 && fmt.bits == 32;
    if (!pcm16 && !f32) {
        throw std::runtime_error("wav: unsupported format (want PCM16 or float32) in " + path);
    }

    const size_t bytes_per = pcm16 ? 2 : 4;
    const size_t total = payload.size() / (bytes_per * fmt.channels);
    signal::Waveform w(fmt.channels, static_cast<int64_t>(total), static_cast<int>(fmt.sample_rate));

    const char* p = payload.data();
    for (size_t t = 0; t < total; ++t) {
        for (int c = 0; c < fmt.channels; ++c) {
            if (pcm16) {
                int16_t s;
                std::memcpy(&s, p, 2);
                p += 2;
                w.at(c, static_cast<int64_t>(t)) = static_cast<double>(s) / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                p += 4;
                w.at(c, static_cast<int64_t>(t)) = static_cast<double>(s);
            }
        }
    }
    return w;
}

void write(const std::string& path, const signal::Waveform& w, SampleFormat format) {
    if (w.channels < 1 || w.samples < 1) throw std::invalid_argument("wav: empty waveform");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("wav: cannot create " + path);

    const bool pcm = format == SampleFormat::pcm16;
    const uint16_t bytes_per = pcm ? 2 : 4;
    const uint32_t data_size =
        static_cast<uint32_t>(w.samples * w.channels * bytes_per);

    out.write("RIFF", 4);
    write_le<uint32_t>(out, 36 + data_size);
    out.write("WAVE", 4);

    out.write("fmt ", 4);
    write_le<uint32_t>(out, 16);
    write_le<uint16_t>(out, pcm ? 1 : 3);
    write_le<uint16_t>(out, static_cast<uint16_t>(w.channels));
    write_le<uint32_t>(out, static_cast<uint32_t>(w.sample_rate));
    write_le<uint32_t>(out, static_cast<uint32_t>(w.sample_rate) * w.channels * bytes_per);
    write_le<uint16_t>(out, static_cast<uint16_t>(w.channels * bytes_per));
    write_le<uint16_t>(out, static_cast<uint16_t>(bytes_per * 8));

    out.write("data", 4);
    write_le<uint32_t>(out, data_size);
    for (int64_t t = 0; t < w.samples; ++t) {
        for (int c = 0; c < w.channels; ++c) {
            const double v = w.at(c, t);
            if (pcm) {
                const double clamped = std::clamp(v, -1.0, 1.0);
                const auto s = static_cast<int16_t>(std::lround(clamped * 32767.0));
                write_le<int16_t>(out, s);
            } else {
                write_le<float>(out, static_cast<float>(v));
            }
        }
    }
    if (!out) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace wavediff::wav
