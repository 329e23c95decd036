#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cycle {

// Portable draws on top of mt19937_64; the std distributions are
// implementation-defined and would break cross-toolchain reproducibility.

inline double rand_real(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

// Uniform integer in [lo, hi], inclusive.
inline std::int64_t rand_int(std::mt19937_64& g, std::int64_t lo, std::int64_t hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t threshold = (0 - range) % range;  // rejection sampling, unbiased
    for (;;) {
        std::uint64_t r = g();
        if (r >= threshold) return lo + static_cast<std::int64_t>(r % range);
    }
}

// FNV-1a over (master seed, stream tag, index); gives independent per-worker
// and per-purpose streams from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(master);
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    mix(index);
    return h;
}

}  // namespace cycle
