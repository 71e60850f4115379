// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_RNG_HPP
#define WAVEDIFF_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace wavediff {

// xoshiro256++ with splitmix64 seeding. All draws are defined by this file
// alone so streams are identical across platforms and standard libraries
// (std::normal_distribution is implementation-defined, which would break
// byte-identical checkpoints).
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    // Independent stream addressed by (seed, key0, key1). Used to make
    // dataset items and per-batch-element noise independent of ordering.
    static Rng keyed(uint64_t seed, uint64_t key0, uint64_t key1 = 0) {
        uint64_t x = seed;
        uint64_t a = splitmix64(x);
        x ^= 0x9E3779B97F4A7C15ull + key0;
        uint64_t b = splitmix64(x);
        x ^= 0xC2B2AE3D27D4EB4Full + key1;
        uint64_t c = splitmix64(x);
        Rng r(a ^ b ^ c);
        r.state_[1] ^= splitmix64(b);
        r.state_[3] ^= splitmix64(c);
        return r;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; draws exactly two words per call so the stream position is
    // a pure function of the call count.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

}  // namespace wavediff

#endif  // WAVEDIFF_RNG_HPP
