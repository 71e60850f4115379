// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_WAV_IO_HPP
#define WAVEDIFF_WAV_IO_HPP

#include <string>

#include "wavediff/signal.hpp"

namespace wavediff::wav {

enum class SampleFormat { pcm16, float32 };

/// Little-endian RIFF reader; accepts PCM 16-bit and IEEE float-32, any
/// channel count, and skips unknown chunks.
signal::Waveform read(const std::string& path);

/// Writes mono/stereo (or more) interleaved WAV. Values are clamped to
/// [-1, 1] for pcm16; float32 is written verbatim.
void write(const std::string& path, const signal::Waveform& w,
           SampleFormat format = SampleFormat::float32);

}  // namespace wavediff::wav

#endif  // WAVEDIFF_WAV_IO_HPP
