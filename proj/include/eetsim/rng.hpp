// rng.hpp: counter-based SplitMix64 streams
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace eetsim::rng {

// SplitMix64 finalizer (Steele, Lea, Flood 2014)
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

// k-th output of the SplitMix64 sequence started at `seed`
inline constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t k) { return mix64(seed + (k + 1) * golden); }

// child seed for (parent, index): trajectory seeds, stream seeds
inline constexpr std::uint64_t derive(std::uint64_t parent, std::uint64_t index) {
    return mix64(mix64(parent) ^ (index * golden + 0x632be59bd9b4e019ULL));
}

inline constexpr double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Sequential SplitMix64 generator
struct SplitMix64 {
    std::uint64_t seed{0};
    std::uint64_t counter{0};

    std::uint64_t next() { return at(seed, counter++); }
    double uniform() { return to_unit(next()); }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    // Box-Muller
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

}  // namespace eetsim::rng
