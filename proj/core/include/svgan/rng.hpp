#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace svgan {

/// Deterministic random stream. All sampling goes through hand-rolled
/// transforms of the raw mt19937_64 output, so a fixed seed yields the same
/// byte-for-byte results on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Standard normal via Box-Muller (fresh pair each call, one value kept).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Normal(0, stddev) with rejection outside +-2 stddev.
    double truncated_normal(double stddev) {
        for (;;) {
            const double x = normal();
            if (std::abs(x) <= 2.0) return x * stddev;
        }
    }

    /// Independent child stream; deterministic in (current state, id).
    Rng derive(std::uint64_t id) {
        std::uint64_t x = engine_() ^ (0x9e3779b97f4a7c15ull * (id + 1));
        // splitmix64 finalizer
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return Rng(x);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace svgan
