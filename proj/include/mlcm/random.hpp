#pragma once

// Seed derivation. Every random stream in the library is keyed by
// (master seed, stream id, index) so that work items can run in any order
// on any number of threads and still consume identical random numbers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace mlcm {

using Rng = std::mt19937_64;

enum class Stream : std::uint64_t {
  ForestTree = 1,
  GbmTree = 2,
  Bootstrap = 3,
  Replication = 4,
  Pilot = 5,
  Truth = 6,
  Learner = 7,
  CateBootstrap = 8,
  Placebo = 9,
  Covariates = 10,
  Scenario = 11,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                           std::uint64_t index) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(stream) * 0xd1342543de82ef95ULL));
  return splitmix64(h ^ (index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index) {
  return Rng(derive_seed(master, stream, index));
}

/// Uniform index in [0, n). Avoids distribution objects so the sequence is
/// fixed by the engine alone.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t bound = n;
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r > limit);
  return static_cast<std::size_t>(r % bound);
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal by Box-Muller, one value per call (the pair's second half
/// is dropped so the stream position depends only on the call count).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
}

}  // namespace mlcm
