#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tdcd {

// Purpose tags for keyed random streams. Every consumer of randomness names
// its stream so that independent draws never alias.
inline constexpr std::string_view kTagMinibatch = "minibatch";
inline constexpr std::string_view kTagInit = "init";
inline constexpr std::string_view kTagShard = "shard";
inline constexpr std::string_view kTagSyntheticX = "synthetic-x";
inline constexpr std::string_view kTagSyntheticTheta = "synthetic-theta";
inline constexpr std::string_view kTagSyntheticNoise = "synthetic-noise";
inline constexpr std::string_view kTagProbe = "probe";

inline constexpr std::uint64_t kStreamGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 output mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Counter-based stream generator: SplitMix64 keyed by (seed, tag, round).
// Portable across platforms and languages; the Python script under
// tests/golden reproduces it bit for bit. Never use the platform default
// engine for anything that must agree across silos.
class Stream {
public:
    Stream(std::uint64_t seed, std::string_view tag, std::uint64_t round_index) {
        std::uint64_t key = mix64(seed + kStreamGamma);
        key = mix64(key ^ fnv1a64(tag));
        key = mix64(key ^ round_index);
        state_ = key;
    }

    std::uint64_t next_u64() {
        state_ += kStreamGamma;
        return mix64(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_f64() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + next_f64() * (hi - lo); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold) return x % n;
        }
    }

    // Standard normal via Box-Muller; two fresh uniforms per call, no caching,
    // so the draw count per value is fixed.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = next_f64();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_ = 0;
};

// FNV-1a over raw bytes; used to fingerprint payloads in traces and tests.
inline std::uint64_t hash_bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace tdcd
