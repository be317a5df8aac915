#pragma once

#include <cmath>
#include <cstdint>

namespace mvlme {

inline constexpr double kPi = 3.14159265358979323846;

// SplitMix64 step; used to derive independent substreams from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic substream derivation: seed -> (a, b). Used for
/// (replication, group) style stream splitting so parallel generation is
/// schedule-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

/// Small counter-based generator (xoshiro-free: iterated SplitMix64).
/// Output sequences are fully specified by this header, so datasets are
/// byte-identical across platforms and standard libraries.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0, 1], 53-bit resolution.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (one value per call; both uniforms are
    /// consumed every call so the draw sequence is position-independent).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    bool bernoulli(double p = 0.5) { return uniform01() <= p; }

  private:
    std::uint64_t state_;
};

}  // namespace mvlme
