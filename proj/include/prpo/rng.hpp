#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace prpo {

// splitmix64 finalizer; used both as a stream derivation hash and a seed mixer.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent child seed from a master seed and a tag path.
// Every source of randomness in a run gets its own derived stream so that
// reordering one phase never perturbs another.
inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> tags) {
    uint64_t h = mix64(master);
    for (uint64_t t : tags) h = mix64(h ^ mix64(t));
    return h;
}

// Seeded RNG with distribution code owned here: std::mt19937_64 output is
// pinned by the standard, the std distributions are not.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), rejection sampled (no modulo bias).
    int next_below(int n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t bound = UINT64_MAX - UINT64_MAX % un;
        uint64_t x = eng_();
        while (x >= bound) x = eng_();
        return static_cast<int>(x % un);
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace prpo
