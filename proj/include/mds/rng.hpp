#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mds {

// Deterministic RNG wrapper. All draws are derived from mt19937_64 output
// directly (no std::*_distribution), so sequences are reproducible across
// standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Independent stream for (seed, index) pairs, e.g. per-sample generation.
    static Rng for_index(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix(seed ^ mix(index + 0x9e3779b97f4a7c15ull)));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, n); n >= 1.
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(eng_() % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; one fresh draw per call keeps the stream stateless.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) {
            u1 = uniform01();
        }
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 eng_;
};

}  // namespace mds
