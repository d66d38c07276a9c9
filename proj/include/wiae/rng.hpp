#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wiae {

using Rng = std::mt19937_64;

// Independent generator derived from a root seed and a stream name, so each
// stochastic component ("data", "init", "batch", "gmm", ...) reproduces on its
// own regardless of what other components consumed.
inline Rng substream(std::uint64_t root, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{std::uint32_t(root), std::uint32_t(root >> 32), std::uint32_t(h), std::uint32_t(h >> 32)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace wiae
