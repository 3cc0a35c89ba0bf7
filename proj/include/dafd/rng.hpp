#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace dafd {

// Deterministic 64-bit RNG (xoshiro256++ seeded through splitmix64).
// Identical seed + identical call sequence -> identical output stream,
// independent of platform or standard library.
//
// Training code never shares one stream across unrelated consumers.
// Instead each consumer derives its own stream from the master seed and a
// tag (e.g. {"dropout", epoch, step, pass}), so adding a consumer — say a
// target-domain forward pass — cannot shift the draws seen by another.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed);

    uint64_t next_u64() {
        // xoshiro256++
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (one spare cached).
    double normal();
    double normal(double mean, double stddev);

    // Unbiased integer in [0, n). n must be positive.
    uint64_t below(uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        std::iota(p.begin(), p.end(), size_t{0});
        shuffle(p);
        return p;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stream derivation: hash the master seed together with a tag string and
// any number of integer qualifiers into a fresh seed.
uint64_t derive_seed(uint64_t master, std::string_view tag);
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a);
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b);
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b, uint64_t c);

inline SeededRng derive_rng(uint64_t master, std::string_view tag) {
    return SeededRng(derive_seed(master, tag));
}
inline SeededRng derive_rng(uint64_t master, std::string_view tag, uint64_t a) {
    return SeededRng(derive_seed(master, tag, a));
}
inline SeededRng derive_rng(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
    return SeededRng(derive_seed(master, tag, a, b));
}
inline SeededRng derive_rng(uint64_t master, std::string_view tag, uint64_t a, uint64_t b,
                            uint64_t c) {
    return SeededRng(derive_seed(master, tag, a, b, c));
}

}  // namespace dafd
