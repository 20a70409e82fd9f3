#pragma once

#include <cstdint>

namespace cob {

// splitmix64, used only to expand a user seed into xoshiro state.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64. Fixed, portable generator: every
// language port of this project reproduces identical streams from the same
// seed, which is what makes synthetic graphs and dropout masks byte-stable.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) without modulo bias (rejection on the
    // top range).
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

   private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

// Derives an independent stream for a named sub-purpose (layer index, epoch,
// branch id) from a run seed. Mixing through splitmix64 keeps streams
// decorrelated without any global state.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = run_seed;
    splitmix64_next(s);
    s ^= 0x517cc1b727220a95ULL * (a + 1);
    splitmix64_next(s);
    s ^= 0x2545f4914f6cdd1dULL * (b + 1);
    splitmix64_next(s);
    s ^= 0x9e3779b97f4a7c15ULL * (c + 1);
    return splitmix64_next(s);
}

}  // namespace cob
