// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include "wavediff/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace wavediff::fft {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

static void transform(std::vector<std::complex<double>>& a, bool invert) {
    const size_t n = a.size();
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft: size must be a power of two, got " + std::to_string(n));
    }

    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = kTwoPi / static_cast<double>(len) * (invert ? 1.0 : -1.0);
        const size_t half = len >> 1;
        for (size_t i = 0; i < n; i += len) {
            for (size_t k = 0; k < half; ++k) {
                // per-index twiddle keeps precision; incremental rotation drifts
                const std::complex<double> w(std::cos(ang * static_cast<double>(k)),
                                             std::sin(ang * static_cast<double>(k)));
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }

    if (invert) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= scale;
    }
}

void forward(std::vector<std::complex<double>>& data) { transform(data, false); }
void inverse(std::vector<std::complex<double>>& data) { transform(data, true); }

}  // namespace wavediff::fft
