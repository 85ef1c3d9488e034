#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace acw {

// All random draws in the project go through these helpers so that results
// depend only on the mt19937_64 bit stream, never on library-specific
// distribution implementations.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (seed, replicate, attempt, purpose) tuples.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b + 0x7f4a7c159e3779b9ULL));
  h = splitmix64(h ^ (c + 0xc2b2ae3d27d4eb4fULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(derive_seed(seed, a, b, c));
}

/// Uniform on [0, 1) from the top 53 bits of the generator output.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1], safe as a log() argument.
inline double uniform01_open(Rng& rng) { return 1.0 - uniform01(rng); }

inline double exponential(Rng& rng) { return -std::log(uniform01_open(rng)); }

/// Box-Muller; one normal per call, the paired draw is discarded so that the
/// stream position is a pure function of the call count.
inline double normal(Rng& rng) {
  double u1 = uniform01_open(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

inline double truncated_normal(Rng& rng, double lo, double hi) {
  for (;;) {
    double z = normal(rng);
    if (z >= lo && z <= hi) return z;
  }
}

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  // Rejection to avoid modulo bias.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace acw
