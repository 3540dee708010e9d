#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mdp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from a base seed.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the stream identified by (base, keys...). Order of keys matters.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t base,
                                                  std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t s = mix_seed(base);
  for (std::uint64_t k : keys) s = mix_seed(s ^ mix_seed(k + 0x632be59bd9b4e019ULL));
  return s;
}

[[nodiscard]] inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(base, keys));
}

}  // namespace mdp
