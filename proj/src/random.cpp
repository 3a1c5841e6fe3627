#include "skin/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace skin::rnd {

double normal(Engine& rng, double mean, double stddev) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t index(Engine& rng, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % bound);
}

}  // namespace skin::rnd
