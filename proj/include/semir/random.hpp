#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semir {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a named component ("traversal",
/// "surrogate", "model_init", "synthetic_noise", ...) from one root seed.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL; // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

inline Rng make_rng(std::uint64_t root, std::string_view name) {
  return Rng(substream_seed(root, name));
}

} // namespace semir
