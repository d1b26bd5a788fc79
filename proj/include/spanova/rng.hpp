#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace spanova {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic generator (xoshiro256++) with hand-rolled distribution
// transforms so that a seed pins the stream independent of the standard
// library in use. Sampler substreams are derived with derive_stream_seed.
class Rng {
  public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform on [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0,1], safe inside log()
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal, Box-Muller (cosine branch only; keeps state minimal)
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double var) { return mean + std::sqrt(var) * normal(); }

    // Gamma(shape, rate) with mean shape/rate; Marsaglia-Tsang squeeze.
    double gamma(double shape, double rate) {
        if (shape < 1.0) {
            // Johnk boost: Ga(a) = Ga(a+1) * U^{1/a}
            const double g = gamma(shape + 1.0, 1.0);
            const double u = uniform_pos();
            return std::max(g * std::pow(u, 1.0 / shape) / rate,
                            std::numeric_limits<double>::min());
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
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
                return std::max(d * v / rate, std::numeric_limits<double>::min());
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a, 1.0);
        const double y = gamma(b, 1.0);
        // clamp away from the endpoints; the ratio can round to 1.0
        return std::min(std::max(x / (x + y), std::numeric_limits<double>::min()),
                        0x1.fffffffffffffp-1);
    }

    // N(mean, var) truncated to (0, inf); Robert's exponential proposal for
    // far-left means, plain rejection otherwise.
    double truncated_normal_pos(double mean, double var) {
        const double sd = std::sqrt(var);
        const double a = -mean / sd;  // standardized lower bound
        if (a < 3.0) {
            for (;;) {
                const double z = normal();
                if (z > a) return mean + sd * z;
            }
        }
        const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            const double z = a - std::log(uniform_pos()) / alpha;
            const double d = z - alpha;
            if (std::log(uniform_pos()) <= -0.5 * d * d) return mean + sd * z;
        }
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

// Stable substream key; used so per-gene chains are identical no matter how
// the gene loop is scheduled across threads.
inline std::uint64_t derive_stream_seed(std::uint64_t salt, std::uint64_t index) {
    std::uint64_t x = salt ^ (0xD1B54A32D192ED03ULL * (index + 1));
    return splitmix64(x);
}

}  // namespace spanova
