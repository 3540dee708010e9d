#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mdp/oracle.hpp"

namespace mdp::sim {

using oracle::ClassId;
using oracle::Sample;
using oracle::TokenId;

enum class Stratum { Mask, Signal, Filler, TriggerReserve };

// Token id layout: [mask | signal class 0 | ... | signal class C-1 | filler | trigger reserve].
struct VocabLayout {
  int num_classes = 2;
  int signal_per_class = 24;
  int filler = 120;
  int trigger_reserve = 16;

  [[nodiscard]] int size() const noexcept {
    return 1 + num_classes * signal_per_class + filler + trigger_reserve;
  }
  [[nodiscard]] TokenId signal_begin(ClassId y) const noexcept {
    return 1 + y * signal_per_class;
  }
  [[nodiscard]] TokenId filler_begin() const noexcept { return 1 + num_classes * signal_per_class; }
  [[nodiscard]] TokenId reserve_begin() const noexcept { return filler_begin() + filler; }

  [[nodiscard]] Stratum stratum_of(TokenId token) const;
  // Class whose signal stratum holds token; -1 for non-signal tokens.
  [[nodiscard]] ClassId signal_class(TokenId token) const;

  // Surface form used on the wire: "[MASK]", "s<class>_<i>", "w<i>", "r<i>".
  [[nodiscard]] std::string token_name(TokenId token) const;
  // Inverse of token_name. VocabularyError for unknown names.
  [[nodiscard]] TokenId token_id(std::string_view name) const;
  // token_name for every id in order.
  [[nodiscard]] std::vector<std::string> token_names() const;
};

struct SyntheticTask {
  VocabLayout layout;
  int min_length = 8;
  int max_length = 24;
  // Fraction of each sample's tokens drawn from signal strata.
  double signal_strength = 0.3;
  // Chance that a signal token comes from a stratum other than the label's.
  // The label's stratum always keeps a strict plurality.
  double minority_rate = 0.15;
  // Filler words follow a Zipf law over their stratum: offset r is drawn with
  // weight 1 / (r + 1)^exponent. Zero gives uniform fillers.
  double filler_zipf_exponent = 1.0;
  // Upper bound on samples generated for one call.
  std::size_t max_pool = 200000;

  void validate() const;  // ConfigError on violation
};

struct DatasetSplits {
  std::vector<Sample> train;   // K per class, class-major order
  std::vector<Sample> dev;     // K per class
  std::vector<Sample> test;    // balanced across classes
  std::vector<Sample> attack;  // attacker's large downstream split, balanced
};

// Deterministic in seed. Sample ids are unique across all splits and no
// token sequence appears twice.
[[nodiscard]] DatasetSplits generate_dataset(const SyntheticTask& task, int shots_per_class,
                                             std::size_t n_test, std::uint64_t seed,
                                             std::size_t n_attack = 0);

// Plurality vote over signal tokens; the generator's labelling rule.
[[nodiscard]] ClassId majority_signal_class(const SyntheticTask& task,
                                            const std::vector<TokenId>& tokens);

}  // namespace mdp::sim
