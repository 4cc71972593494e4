#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace fabseg {

// The standard distributions are implementation-defined; these helpers keep
// seeded results identical across standard libraries.
using Rng = std::mt19937_64;

inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

/// Box-Muller normal deviate.
inline double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fabseg
