#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "mproj/util/errors.hpp"

namespace mproj {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256++ with all samplers written out so that streams are
/// bit-reproducible across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    /// Independent stream derived from a seed and an arbitrary key path,
    /// e.g. Rng::stream(seed, {pulse_index, beamlet_id}).
    static Rng stream(uint64_t seed, std::initializer_list<uint64_t> keys) {
        uint64_t h = seed ^ 0x6a09e667f3bcc908ULL;
        for (uint64_t k : keys) {
            uint64_t sm = h ^ (k + 0x9e3779b97f4a7c15ULL);
            h = splitmix64(sm);
        }
        return Rng(h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }
    bool bernoulli(double p) { return uniform() < p; }

    double normal(double mean = 0.0, double sigma = 1.0) {
        // Box-Muller; one fresh pair per call keeps the stream stateless.
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Gamma(shape, scale) by Marsaglia-Tsang squeeze.
    double gamma(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw config_error("gamma distribution requires shape > 0 and scale > 0");
        if (shape < 1.0) {
            // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    int64_t poisson(double lambda) {
        if (lambda < 0.0) throw config_error("poisson rate must be non-negative");
        if (lambda == 0.0) return 0;
        if (lambda < 30.0) {
            // Knuth product method
            const double limit = std::exp(-lambda);
            double prod = uniform();
            int64_t n = 0;
            while (prod > limit) {
                prod *= uniform();
                ++n;
            }
            return n;
        }
        // normal approximation; skew is negligible for the count levels used here
        const double v = std::round(lambda + std::sqrt(lambda) * normal());
        return v < 0.0 ? 0 : static_cast<int64_t>(v);
    }

  private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    uint64_t s_[4];
};

}  // namespace mproj
