#pragma once

#include <cmath>
#include <cstdint>

namespace nodeonet {

/// xoshiro256++ (Blackman & Vigna), seeded through splitmix64. Constants are
/// the reference ones: rotl(s0+s3,23)+s0 output, rotations 17/45, splitmix
/// increment 0x9e3779b97f4a7c15. Same seed, same stream, on any platform.
class RngState {
public:
    explicit RngState(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        seed_ = seed;
        std::uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
        has_cached_normal_ = false;
        cached_normal_ = 0.0;
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo,hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the sine partner is cached so draws
    /// come in deterministic pairs.
    double normal() noexcept {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    /// Independent stream for sample `index`; used for per-sample parallel
    /// generation with reproducible results regardless of scheduling.
    static RngState for_sample(std::uint64_t base_seed, std::uint64_t index) {
        return RngState(base_seed + index);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_ = 0;
    std::uint64_t s_[4] = {};
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace nodeonet
