#pragma once

// Portable deterministic randomness for the simulator.
//
// Generator: SplitMix64 (Steele, Lea, Flood 2014). Output n of a stream seeded
// with s is mix(s + (n + 1) * 0x9E3779B97F4A7C15), so the stream is a pure
// function of (seed, counter) and identical on every platform.
// Uniform doubles take the top 53 bits. Gaussians use the polar-free
// Box-Muller transform; both outputs of a pair are consumed in order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace sight {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    /// Independent substream keyed by a tag, e.g. SplitMix64::derive(seed, "noise").
    static SplitMix64 derive(std::uint64_t seed, std::string_view tag) noexcept {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return SplitMix64(mix(seed ^ mix(h)));
    }

    std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_open_zero() noexcept {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n);
        std::uint64_t x = next();
        while (x > limit) x = next();
        return x % n;
    }

    double gaussian() noexcept {
        if (has_spare_) {
            const double z = spare_;
            has_spare_ = false;
            return z;
        }
        const double u1 = uniform_open_zero();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sight
