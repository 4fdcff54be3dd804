#pragma once

#include <cstdint>
#include <random>

namespace critlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for draw `index` of a run seeded with `seed`.
///
/// Counter-based splitting: the stream for a draw depends only on
/// (seed, index), so serial and parallel sweeps produce identical samples.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5851f42d4c957f2dULL)));
}

}  // namespace critlab
