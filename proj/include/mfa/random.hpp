#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace mfa {

/// Session RNG. The engine's output sequence is fixed by the standard, so a
/// seed reproduces the same tie-breaks on every platform.
using Rng = std::mt19937_64;

/// Unbiased index in [0, n) by rejection sampling. std::uniform_int_distribution
/// is implementation-defined, which would break transcript portability.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = n;
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound);
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % bound);
}

/// Fisher-Yates with uniform_index, for the same reason.
template <class Vec>
void seeded_shuffle(Vec& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace mfa
