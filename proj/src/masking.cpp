#include "mdp/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdp/errors.hpp"

namespace mdp {

std::size_t mask_count(std::size_t length, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ParameterError("masking rate must lie in (0, 1]");
  if (length == 0) throw InsufficientDataError("cannot mask an empty sample");
  const auto rounded = static_cast<std::size_t>(std::llround(rate * static_cast<double>(length)));
  return std::clamp<std::size_t>(rounded, 1, length);
}

std::vector<std::size_t> draw_mask_positions(std::size_t length, double rate, Rng& rng) {
  const std::size_t count = mask_count(length, rate);
  std::vector<std::size_t> all(length);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, length - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

oracle::Sample apply_mask(const oracle::Sample& sample, const std::vector<std::size_t>& positions) {
  oracle::Sample masked = sample;
  for (std::size_t p : positions) {
    if (p >= masked.tokens.size()) throw ParameterError("mask position out of range");
    masked.tokens[p] = oracle::kMaskToken;
  }
  return masked;
}

}  // namespace mdp
