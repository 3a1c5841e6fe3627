#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

// Seeded sampling helpers. Everything here is defined in terms of raw
// mt19937_64 output so streams are identical across standard libraries.
namespace skin::rnd {

using Engine = std::mt19937_64;

// SplitMix64 finalizer; combines a base seed with stream coordinates.
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
    return mix(mix(mix(mix(seed) ^ a) ^ b) ^ c);
}

inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double normal(Engine& rng, double mean, double stddev);

// Unbiased integer in [0, n).
std::size_t index(Engine& rng, std::size_t n);

template <class T>
void shuffle(std::vector<T>& items, Engine& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[index(rng, i)]);
    }
}

}  // namespace skin::rnd
