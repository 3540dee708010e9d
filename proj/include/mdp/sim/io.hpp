#pragma once

// Files the simulator reads and writes.
//
// Checkpoint: a one-line JSON header (dimensions, label vocabulary, token
// layout, seed, attack) followed by each parameter array as a name line and
// row lines of hexadecimal floats. Round trips are bit-exact.
//
// Dataset: one JSON record per line, {"id":..,"tokens":[..],"label":..,"is_poisoned":..}.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdp/sim/attacks.hpp"
#include "mdp/sim/synthetic_task.hpp"
#include "mdp/sim/toy_model.hpp"

namespace mdp::sim {

struct Checkpoint {
  ToyModel model;
  VocabLayout layout;
  std::uint64_t seed = 0;
  std::optional<AttackSpec> attack;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
[[nodiscard]] Checkpoint read_checkpoint(std::istream& in);  // IoError on malformed input

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
[[nodiscard]] Checkpoint load_checkpoint(const std::string& path);

void write_dataset(std::ostream& out, std::span<const Sample> samples);
[[nodiscard]] std::vector<Sample> read_dataset(std::istream& in);

void save_dataset(const std::string& path, std::span<const Sample> samples);
[[nodiscard]] std::vector<Sample> load_dataset(const std::string& path);

}  // namespace mdp::sim
