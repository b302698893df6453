#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace promptrr {

/// Seedable generator used by every stochastic component. Normal variates
/// come from Box-Muller over mt19937_64 uniforms ((x >> 11) * 2^-53), so
/// another implementation can reproduce the streams at distribution level;
/// within this implementation draws are bitwise reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // modulo bias is irrelevant at the sizes used here (n << 2^64)
        return engine_() % n;
    }

    /// Standard normal via Box-Muller, spare value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Derive an independent child seed for a named stream.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ull * (stream + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace promptrr
