#pragma once

#include <cstdint>
#include <random>

namespace topopt {

// splitmix64 step; used to derive independent seeds from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix64(mix64(master ^ mix64(a)) ^ mix64(b + 0x632be59bd9b4e019ull));
}

using Rng = std::mt19937_64;

}  // namespace topopt
