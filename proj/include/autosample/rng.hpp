#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace autosample {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed and a fixed label,
// so adding a consumer never shifts the draws seen by another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

inline Rng make_rng(std::uint64_t master, std::string_view label) {
  return Rng(derive_seed(master, label));
}

// Uniform real in [0, 1).
inline double uniform01(Rng& rng) { return std::generate_canonical<double, 64>(rng); }

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

}  // namespace autosample
