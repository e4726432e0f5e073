#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nodecast {

// Counter-based RNG built on the splitmix64 finalizer. Streams are keyed by
// hashing (seed, tag, lane) so generation order never depends on loop order:
// stock 7's draws are the same whether stocks 0..6 were generated before it
// or not. That property is what makes artifacts byte-stable when the universe
// or the code path around them changes.
//
// Not cryptographic. Statistical quality is fine for simulation work.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_str(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    // FNV-1a, then one splitmix round to spread short strings apart.
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : key_(splitmix64(seed)) {}

    Rng(uint64_t seed, std::string_view tag, uint64_t lane = 0)
        : key_(splitmix64(splitmix64(seed) ^ hash_str(tag) ^ splitmix64(lane ^ 0x5851f42d4c957f2dULL))) {}

    // Derive an independent stream without consuming state.
    Rng fork(std::string_view tag, uint64_t lane = 0) const {
        Rng r(0);
        r.key_ = splitmix64(key_ ^ hash_str(tag) ^ splitmix64(lane ^ 0xda942042e4dd58b5ULL));
        return r;
    }

    uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

    // Uniform in (0, 1]: never returns 0 so log() is always safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * (uniform() - 1e-300); }

    double normal() {
        // Box-Muller, one value per call (the sine twin is discarded to keep
        // the call/state mapping trivial to reason about).
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    // Fisher-Yates with our own bounded draw, so the permutation does not
    // depend on the standard library's distribution implementation.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t key_;
    uint64_t ctr_ = 0;
};

}  // namespace nodecast
