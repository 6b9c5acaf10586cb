#pragma once

#include <cstdint>
#include <vector>

namespace flamekit {

/// SplitMix64 generator (Steele, Lea & Flood's mixing constants).
///
/// Every reproducibility contract in this library is pinned to this
/// generator rather than <random>: the <random> distributions are
/// implementation-defined, whereas the sequence below is identical on
/// every platform for a given seed.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        // Multiply-shift rejection-free mapping is biased for huge n;
        // all of our n are far below 2^32, where the bias is negligible
        // compared to the modulo alternative and the mapping stays portable.
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n));
    }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from (seed, tag). Used to keep
/// e.g. weight init and batch shuffling decorrelated under one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 g(seed ^ (tag * 0x9E3779B97F4A7C15ULL));
    return g.next_u64();
}

/// In-place Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void fisher_yates(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace flamekit
