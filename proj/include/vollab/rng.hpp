#pragma once

#include <cstddef>
#include <cstdint>

namespace vollab {

/// splitmix64; used for seeding and stream derivation.
struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

/// xoshiro256++ (Blackman & Vigna). Small, fast, reproducible everywhere.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    uint64_t next() {
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

    /// Uniform in the open interval (0,1).
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    /// Uniform in [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next() % n; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

/// Disjoint stream families; keeps derived streams from colliding across uses.
enum class StreamKind : uint64_t {
    theta = 1,
    sample_sim = 2,
    path_block = 3,
    path_perp = 4,
    split_shuffle = 5,
    epoch_shuffle = 6,
    weight_init = 7,
    de_population = 8,
    mixture = 9,
    target_suite = 10,
};

inline uint64_t derive_seed(uint64_t seed, StreamKind kind, uint64_t index) {
    SplitMix64 sm(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<uint64_t>(kind) + 1)));
    uint64_t base = sm.next();
    SplitMix64 sm2(base ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return sm2.next();
}

inline Xoshiro256pp make_stream(uint64_t seed, StreamKind kind, uint64_t index) {
    return Xoshiro256pp(derive_seed(seed, kind, index));
}

/// Fills out[0..n) with standard normals drawn from rng (inverse-CDF method).
void fill_normals(Xoshiro256pp& rng, double* out, std::size_t n);

}  // namespace vollab
