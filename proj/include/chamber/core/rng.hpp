#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace chamber {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Deterministic random stream. All draws are built from raw 64-bit outputs
/// of xoshiro256** so that sequences are reproducible across platforms and
/// standard-library versions (std::*_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = x = splitmix64(x);
    }

    /// Derives an independent child seed, e.g. hash(global_seed, episode_id).
    static uint64_t derive(uint64_t seed, uint64_t stream_id) {
        return splitmix64(splitmix64(seed) ^ (0x94d049bb133111ebull * (stream_id + 1)));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int64_t uniform_int(int64_t n) {
        // Rejection sampling to avoid modulo bias.
        const uint64_t un = uint64_t(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t r;
        do { r = next_u64(); } while (r >= limit);
        return int64_t(r % un);
    }

    /// Standard normal via Box-Muller (one value per call, no cached state).
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Normal(0, std) re-drawn until within 2 std, the usual weight init.
    double truncated_normal(double stddev) {
        double v = normal() * stddev;
        while (std::fabs(v) > 2.0 * stddev) v = normal() * stddev;
        return v;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates; std::shuffle is not guaranteed reproducible.
        for (int64_t i = int64_t(v.size()) - 1; i > 0; --i) {
            const int64_t j = uniform_int(i + 1);
            std::swap(v[size_t(i)], v[size_t(j)]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

} // namespace chamber
