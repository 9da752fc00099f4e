#pragma once

// Portable random helpers on top of std::mt19937_64. The standard
// distributions are implementation-defined, so samples are derived here to
// keep corpora and initializations identical across standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace sekd::rng {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return mix(mix(seed) ^ mix(stream + 0x51ed270b27c9f1a3ULL));
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64 &gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection (bound > 0).
inline std::uint64_t below(std::mt19937_64 &gen, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = gen();
  while (x >= limit) {
    x = gen();
  }
  return x % bound;
}

/// Standard normal via Box-Muller (one sample per call).
inline double normal(std::mt19937_64 &gen) {
  const double u1 = 1.0 - uniform01(gen); // (0, 1]
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename V>
void shuffle(std::vector<V> &items, std::mt19937_64 &gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

} // namespace sekd::rng
