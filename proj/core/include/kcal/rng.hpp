#pragma once

// SplitMix64 (Steele/Lea/Flood constants). Everything in the library that
// needs randomness draws from this generator so shuffles, splits and
// parameter initialization reproduce bit-for-bit across platforms and
// can be re-implemented in any language from the constants alone.

#include <cstdint>

namespace kcal {

struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform in [0, n); modulo draw, bias negligible for the sizes used here
    std::uint64_t next_below(std::uint64_t n) { return next() % n; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // inclusive range
    int next_int(int lo, int hi) {
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
};

// Independent stream for (seed, stream): one mixing round keeps streams
// decorrelated without any shared state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 g(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    return g.next();
}

} // namespace kcal
