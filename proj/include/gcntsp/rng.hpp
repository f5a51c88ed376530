#pragma once

/// @file rng.hpp
/// @brief Portable pseudo-random generators used for every stochastic step.
///
/// Instances are drawn from xoshiro256** (Blackman & Vigna, 2018) seeded through
/// SplitMix64. Both algorithms use only 64-bit shifts, xors, rotations and
/// multiplications, so any language can reproduce the same streams:
///
///   SplitMix64 step:  state += 0x9E3779B97F4A7C15
///                     z = state
///                     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///                     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///                     return z ^ (z >> 31)
///
///   xoshiro256**:     result = rotl(s1 * 5, 7) * 9
///                     t = s1 << 17
///                     s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
///                     s2 ^= t;  s3 = rotl(s3, 45)
///
/// A uniform double in [0,1) is (next() >> 11) * 2^-53.
/// Substream `index` of `seed` seeds SplitMix64 with
/// seed ^ (0xD1B54A32D192ED03 * (index + 1)) and draws s0..s3 from it.

#include <cstdint>
#include <limits>

namespace gcntsp {

class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
};

class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    /// Independent stream for (seed, index); used for per-instance generation.
    static Rng substream(std::uint64_t seed, std::uint64_t index) noexcept {
        return Rng(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % bound;
    }

    /// Fisher-Yates shuffle driven by `below`, identical across standard libraries.
    template <typename Container>
    void shuffle(Container& c) noexcept {
        for (std::size_t i = c.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(c[i - 1], c[j]);
        }
    }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

} // namespace gcntsp
