#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace jd {

// Deterministic, stdlib-independent random streams so that batches are
// bit-reproducible across platforms and thread counts. xoshiro256++ core,
// SplitMix64 seeding, Box-Muller normals, inversion Poisson.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    Rng(std::uint64_t seed, std::uint64_t stream) {
        reseed(splitmix(seed) ^ splitmix(stream * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL));
    }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix(x);
        has_spare_ = false;
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

    // Uniform in (0,1); never returns 0 or 1.
    double uniform() {
        const std::uint64_t bits = next_u64() >> 11;  // 53 bits
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Poisson by CDF inversion. Intended for small means (jump counts per
    // step, mean = lambda*dt << 1); exact for any mean but O(mean) time.
    int poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
        if (mean == 0.0) return 0;
        const double u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        int k = 0;
        while (u > cdf && k < 10000) {
            ++k;
            p *= mean / k;
            cdf += p;
        }
        return k;
    }

private:
    static std::uint64_t splitmix(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t splitmix(std::uint64_t&& x) {
        std::uint64_t y = x;
        return splitmix(y);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace jd
