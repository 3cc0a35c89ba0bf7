#include "dafd/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dafd {

namespace {

inline uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double SeededRng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

uint64_t SeededRng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
    // Rejection sampling on the top of the range to stay unbiased.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

namespace {

constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a(uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (i * 8)) & 0xff;
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t finalize(uint64_t h) {
    uint64_t s = h;
    return splitmix64(s);
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view tag) {
    return finalize(fnv1a(fnv1a(kFnvOffset, master), tag));
}
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a) {
    return finalize(fnv1a(fnv1a(fnv1a(kFnvOffset, master), tag), a));
}
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
    return finalize(fnv1a(fnv1a(fnv1a(fnv1a(kFnvOffset, master), tag), a), b));
}
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b, uint64_t c) {
    return finalize(fnv1a(fnv1a(fnv1a(fnv1a(fnv1a(kFnvOffset, master), tag), a), b), c));
}

}  // namespace dafd
