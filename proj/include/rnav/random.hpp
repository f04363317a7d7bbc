#pragma once

#include <cstdint>
#include <random>

namespace rnav {

/// splitmix64 mix step; used to derive independent stream seeds from
/// (base seed, stream index) pairs so per-frame noise is reproducible.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(base, stream));
}

}  // namespace rnav
