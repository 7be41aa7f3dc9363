#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace wonder::rng {

// SplitMix64 step; used both as a tiny PRNG and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a root seed and up to three tags.
// Every random draw in the library flows through streams derived this way,
// so parallel and serial execution orders produce identical data.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = seed;
    std::uint64_t z = splitmix64(s);
    s ^= z + a;
    z = splitmix64(s);
    s ^= z + b;
    z = splitmix64(s);
    s ^= z + c;
    return splitmix64(s);
}

// Stream tags for the different random objects a synthetic dataset needs.
enum : std::uint64_t {
    kTagRow = 0x526f77ULL,        // one stream per design-matrix row
    kTagBeta = 0x42657461ULL,     // regression coefficients
    kTagNoise = 0x4e6f697365ULL,  // per-row noise
    kTagPermute = 0x5065726dULL,  // row permutations / subsampling
    kTagSeedFan = 0x5365656445ULL // per-replication seeds in experiments
};

// Deterministic random stream: mt19937_64 core with explicit Box-Muller
// normals. Avoids std::normal_distribution, whose algorithm is
// implementation-defined, so streams are reproducible across standard
// libraries.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t uniform_below(std::uint64_t bound) {
        const std::uint64_t limit = bound * (UINT64_MAX / bound);
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % bound;
    }

    // Standard normal via Box-Muller; pairs are consumed in order.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace wonder::rng
