#pragma once

#include <cstdint>
#include <random>

// Splittable random streams. Every consumer derives its generator from
// (master_seed, run_index, stream_id) through splitmix64 mixing, so any run
// of any scenario can be regenerated in isolation, in any order, on any
// thread, and different filters replay byte-identical noise for the same
// run index.

namespace relkal::rng {

inline constexpr std::uint64_t kStreamImu1 = 1;
inline constexpr std::uint64_t kStreamImu2 = 2;
inline constexpr std::uint64_t kStreamMeas = 3;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// 64-bit key for the (seed, run, stream) triple.
inline std::uint64_t derive_key(std::uint64_t master_seed,
                                std::uint64_t run_index,
                                std::uint64_t stream_id) {
  std::uint64_t state = master_seed;
  std::uint64_t key = splitmix64(state);
  state = key ^ (run_index * 0xD1B54A32D192ED03ull);
  key = splitmix64(state);
  state = key ^ (stream_id * 0x8CB92BA72F3D8DD7ull);
  return splitmix64(state);
}

/// Independent generator for one stream of one run.
inline std::mt19937_64 make_stream(std::uint64_t master_seed,
                                   std::uint64_t run_index,
                                   std::uint64_t stream_id) {
  return std::mt19937_64(derive_key(master_seed, run_index, stream_id));
}

}  // namespace relkal::rng
