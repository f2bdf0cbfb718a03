#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace otoc {

// SplitMix64 finalizer. Used as a counter-based hash: the value for
// (seed, counter) never depends on how many other values were drawn.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed of stream `index` under `master`. Adding trials never perturbs the
// streams of earlier trials.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Uniform double in (0, 1) from a 64-bit hash.
inline double hash_to_unit(std::uint64_t h) noexcept {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal variate for (seed, counter), Box-Muller on two hashed
// uniforms.
inline double counter_normal(std::uint64_t seed, std::uint64_t counter) noexcept {
    const double u1 = hash_to_unit(derive_seed(seed, 2 * counter));
    const double u2 = hash_to_unit(derive_seed(seed, 2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return hash_to_unit(rng());
}

}  // namespace otoc
