#pragma once

#include <cmath>
#include <cstdint>

namespace qcgla {

// splitmix64: tiny, fully portable generator. Output files and frozen test
// expectations depend on byte-identical streams across compilers, which the
// standard <random> distributions do not guarantee.
class rng {
public:
    explicit rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform integer in [0, bound)
    uint64_t next_below(uint64_t bound) {
        return bound ? next_u64() % bound : 0;
    }

    // uniform integer in [lo, hi] inclusive
    int64_t next_range(int64_t lo, int64_t hi) {
        return lo + int64_t(next_below(uint64_t(hi - lo + 1)));
    }

    // uniform double in [0, 1)
    double next_unit() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform float in [lo, hi)
    float next_float(float lo, float hi) {
        return lo + float(next_unit()) * (hi - lo);
    }

    // standard normal via Box-Muller
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace qcgla
