#pragma once

#include <cstdint>
#include <random>

namespace so3diff {

/// The single RNG stream type used throughout; always passed explicitly.
using Rng = std::mt19937_64;

/// Independent child stream derived from a parent seed and a stream index.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace so3diff
