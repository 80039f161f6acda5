#pragma once

// Seeding and random streams.
//
// Every random draw in a run comes from a Stream whose 64-bit seed is derived
// from the master seed by the mixing functions below. The derivation is part
// of the reproducibility contract and is specified bit-exactly:
//
//   fmix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//               return z ^ (z >> 31)
//   mix(seed, index) = fmix64(seed + 0x9E3779B97F4A7C15 * (index + 1))   (mod 2^64)
//
// fmix64 is a bijection on 64-bit words and the golden-ratio increment is odd,
// so mix(seed, i) != mix(seed, j) whenever i != j (mod 2^64).
//
// A Stream is xoshiro256** whose four state words are the first four outputs
// of splitmix64 started at the stream seed.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace metaexp {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fmix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t index) noexcept {
    return fmix64(seed + kGolden * (index + 1));
}

/// Domain tags keep streams for different purposes apart inside a replication.
enum class StreamTag : std::uint64_t {
    fleet = 1,
    traffic = 2,
    behavior = 3,
    assignment = 4,
};

constexpr std::uint64_t derive(std::uint64_t seed, StreamTag tag) noexcept {
    return mix(seed, static_cast<std::uint64_t>(tag));
}

constexpr std::uint64_t derive(std::uint64_t seed, StreamTag tag, std::uint64_t id) noexcept {
    return mix(derive(seed, tag), id);
}

/// xoshiro256** engine; satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t seed = 0) noexcept {
        std::uint64_t x = seed;
        for (auto& word : s_) {
            x += kGolden;
            word = fmix64(x);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
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

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Integer uniform on [lo, hi] (inclusive). Lemire's multiply-shift with rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>((*this)());
        const std::uint64_t threshold = (0 - range) % range;
        for (;;) {
            const std::uint64_t r = (*this)();
            const auto m = static_cast<unsigned __int128>(r) * range;
            if (static_cast<std::uint64_t>(m) >= threshold)
                return lo + static_cast<std::int64_t>(m >> 64);
        }
    }

    /// Binomial(n, p) draw. p outside (0,1) is clamped to the degenerate cases.
    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        std::binomial_distribution<std::int64_t> dist(n, p);
        return dist(*this);
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> s_{};
};

}  // namespace metaexp
