// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_FFT_HPP
#define WAVEDIFF_FFT_HPP

#include <complex>
#include <vector>

namespace wavediff::fft {

// In-place iterative radix-2 FFT, X_k = sum_n x_n exp(-i 2 pi n k / N).
// N must be a power of two.
void forward(std::vector<std::complex<double>>& data);

// Inverse transform including the 1/N scaling.
void inverse(std::vector<std::complex<double>>& data);

bool is_power_of_two(size_t n);

}  // namespace wavediff::fft

#endif  // WAVEDIFF_FFT_HPP
