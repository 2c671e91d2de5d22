#pragma once

#include <cmath>
#include <cstdint>

namespace repbench {

// splitmix64 finalizer. Good avalanche; also used to derive child seeds.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index) {
    return mix64(derive_seed(seed, tag) ^ mix64(index + 0x632be59bd9b4e019ull));
}

// Counter-based generator: the i-th output is a pure function of (seed, i).
// Streams are seekable, so replay and resume just store the counter.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    uint64_t next_u64() { return mix64(seed_ + counter_++ * 0x9e3779b97f4a7c15ull); }

    uint64_t counter() const { return counter_; }
    void seek(uint64_t counter) { counter_ = counter; }
    uint64_t seed() const { return seed_; }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased uniform on [0, n) (Lemire's multiply-shift with rejection).
    uint64_t below(uint64_t n) {
        uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<uint64_t>(m);
        if (lo < n) {
            uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Uniform integer on [lo, hi], inclusive.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Box-Muller; consumes two uniforms and discards the second value so the
    // stream position stays a pure function of the call count.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

private:
    uint64_t seed_;
    uint64_t counter_;
};

} // namespace repbench
