#pragma once

#include <cstddef>
#include <vector>

#include "mdp/oracle.hpp"
#include "mdp/random.hpp"

namespace mdp {

// Number of positions masked per trial: max(1, round(rate * length)), capped
// at length.
[[nodiscard]] std::size_t mask_count(std::size_t length, double rate);

// Distinct positions drawn without replacement, returned sorted.
[[nodiscard]] std::vector<std::size_t> draw_mask_positions(std::size_t length, double rate, Rng& rng);

// Copy of sample with the given positions replaced by the mask token.
[[nodiscard]] oracle::Sample apply_mask(const oracle::Sample& sample,
                                        const std::vector<std::size_t>& positions);

}  // namespace mdp
