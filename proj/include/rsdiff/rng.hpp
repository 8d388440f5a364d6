#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace rsdiff {

// Counter-based generator built on the splitmix64 finalizer: the n-th output
// is a pure function of (seed, n). Streams can therefore be split, replayed
// from any position, and reproduced across platforms by storing two integers.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t pos = 0;
};

namespace rngdetail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + kGamma + (h << 6) + (h >> 2)));
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace rngdetail

inline RngState seeded_rng(std::uint64_t seed) { return RngState{seed, 0}; }

inline std::uint64_t next_u64(RngState& rng) {
    rng.pos += 1;
    return rngdetail::mix64(rng.seed + rng.pos * rngdetail::kGamma);
}

// Uniform double in [0, 1) with 53 random bits.
inline double next_uniform(RngState& rng) {
    return static_cast<double>(next_u64(rng) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes exactly two uniforms per draw so
// stream positions stay predictable.
inline double next_normal(RngState& rng) {
    const double u1 = 1.0 - next_uniform(rng);  // (0, 1]
    const double u2 = next_uniform(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Unbiased integer in [lo, hi] by rejection sampling.
inline std::int64_t next_int(RngState& rng, std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("next_int: lo > hi");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64(rng));  // full 64-bit span
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range);
    std::uint64_t v = next_u64(rng);
    while (v >= limit) v = next_u64(rng);
    return lo + static_cast<std::int64_t>(v % range);
}

// Stream derivation: children are decorrelated from the parent and from each
// other by hashing labels/indices into a fresh seed. RngState itself is
// single-owner; splitting happens only through these.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    return rngdetail::combine(seed, rngdetail::fnv1a(label));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t a) {
    return rngdetail::combine(derive_seed(seed, label), a);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t a,
                                 std::uint64_t b) {
    return rngdetail::combine(derive_seed(seed, label, a), b);
}

}  // namespace rsdiff
