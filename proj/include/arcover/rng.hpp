#pragma once

#include <cstdint>
#include <random>

namespace arcover {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Substream key for one simulation run. A run's random numbers depend only on
/// (seed, stream, cell, run), never on which thread executes it.
constexpr std::uint64_t substream_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t cell,
                                      std::uint64_t run) noexcept {
  return mix64(mix64(mix64(mix64(seed) ^ stream) ^ cell) ^ run);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t cell, std::uint64_t run) {
  return Engine(substream_key(seed, stream, cell, run));
}

}  // namespace arcover
