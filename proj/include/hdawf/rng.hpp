#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hdawf {

using Rng = std::mt19937_64;

// Sub-stream tags. Every random stream in the library is derived from one
// root seed plus a tag and up to two counters, so reruns are reproducible
// regardless of evaluation order.
enum class Stream : std::uint64_t {
    split = 1,
    init = 2,
    shuffle = 3,
    augment = 4,
    tune = 5,
    order = 6,
    synth = 7,
    sample = 8,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(root);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t root, Stream s, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
    return derive_seed(root, static_cast<std::uint64_t>(s), b, c);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform integer in [lo, hi] by rejection on the raw 64-bit output. Unlike
// std::uniform_int_distribution this is identical across standard libraries.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(rng());
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
}

// Uniform real in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform_real(rng) < p; }

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hdawf
