#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdp/random.hpp"
#include "mdp/sim/synthetic_task.hpp"

namespace mdp::sim {

enum class AttackKind { BadNets, AddSent, EP, SOS };

[[nodiscard]] std::string to_string(AttackKind kind);
[[nodiscard]] AttackKind parse_attack_kind(const std::string& name);  // ConfigError if unknown

// Number of trigger tokens each kind uses.
[[nodiscard]] std::size_t trigger_length(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::BadNets;
  std::vector<TokenId> triggers;
  ClassId target = 0;
  double poisoning_rate = 0.10;
  double poison_weight = 1.0;  // lambda on the poisoned term

  // ConfigError on wrong trigger count, a trigger inside a signal stratum,
  // duplicate triggers, or rates out of range.
  void validate(const VocabLayout& layout) const;
};

// BadNets and EP use the first trigger-reserve token, a word clean text never
// contains. AddSent and SOS use mid-frequency filler words (filler ranks
// 30..34 and 60..62).
[[nodiscard]] AttackSpec default_attack(AttackKind kind, const VocabLayout& layout);

// Inserts every trigger token. BadNets/EP insert one token, AddSent the
// phrase contiguously, SOS each token at an independent position.
[[nodiscard]] Sample insert_trigger(const Sample& sample, const AttackSpec& spec, Rng& rng);

// Inserts the given tokens, each at an independent uniform position.
[[nodiscard]] Sample insert_tokens(const Sample& sample, std::span<const TokenId> tokens, Rng& rng);

// Poisons exactly round(rate * N) samples chosen uniformly: trigger inserted,
// label set to the target, is_poisoned set, id tagged with kPoisonIdBit. For
// SOS, as many negative samples are appended, each a copy of an unselected
// sample carrying a strict non-empty subset of the triggers and its original
// label.
[[nodiscard]] std::vector<Sample> poison(std::span<const Sample> samples, const AttackSpec& spec,
                                         std::uint64_t seed);

// Trigger-bearing copies of every non-target-class sample (ASR / FAR test set).
[[nodiscard]] std::vector<Sample> make_poisoned_test(std::span<const Sample> clean,
                                                     const AttackSpec& spec, std::uint64_t seed);

inline constexpr oracle::SampleId kPoisonIdBit = oracle::SampleId{1} << 40;
inline constexpr oracle::SampleId kNegativeIdBit = oracle::SampleId{1} << 41;

}  // namespace mdp::sim
