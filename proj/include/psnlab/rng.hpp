#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace psnlab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream key from a component label, a base seed and any number of indices.
inline std::uint64_t derive_seed(std::string_view label, std::uint64_t base,
                                 std::initializer_list<std::uint64_t> idx = {}) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h = splitmix64(h ^ splitmix64(base));
    for (auto v : idx) h = splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::string_view label, std::uint64_t base,
                    std::initializer_list<std::uint64_t> idx = {}) {
    return Rng(derive_seed(label, base, idx));
}

// Uniform on the open interval (0,1).
inline double uniform01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double exponential1(Rng& rng) { return -std::log(uniform01(rng)); }

inline double normal01(Rng& rng) {
    // Box-Muller on two open uniforms; one value per call keeps streams simple.
    double u1 = uniform01(rng), u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline int poisson(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<int> d(mean);
    return d(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

template <class It>
void shuffle(It first, It last, Rng& rng) {
    auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(first[i - 1], first[j]);
    }
}

}  // namespace psnlab
