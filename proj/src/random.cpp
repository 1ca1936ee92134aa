#include "slrkit/random.hpp"

#include "slrkit/common.hpp"

#include <cmath>

namespace slrkit {

int64_t RandomSource::uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw InvalidArgument("uniform_int: empty range");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % range);
}

double RandomSource::normal() {
    // Box-Muller; u1 shifted away from zero so the log stays finite.
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, std::string_view component) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (char c : component) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(seed ^ h);
}

}  // namespace slrkit
