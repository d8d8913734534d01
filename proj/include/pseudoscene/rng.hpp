#pragma once

#include <cstdint>

namespace pseudoscene::rng {

/// splitmix64: the 64-bit generator used for all sampling in this library.
/// Chosen because its output is fully portable (no distribution objects, no
/// implementation-defined shuffles) so plans reproduce bit-for-bit across
/// platforms and standard libraries.
struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Unbiased uniform draw in [0, n) via rejection sampling.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }
};

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Stream splitting: substream `index` of a master seed starts from a
/// double-mixed state so consecutive substreams share no sequence prefix.
inline SplitMix64 stream_for(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64{
        mix64(mix64(seed + 0x9E3779B97F4A7C15ull * (index + 1)))};
}

} // namespace pseudoscene::rng
