#pragma once

// The model-oracle contract: a token sequence goes in, a distribution over
// the label-token vocabulary comes out. Detectors never see model internals.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdp/numstats.hpp"

namespace mdp::oracle {

using TokenId = std::int32_t;
using ClassId = int;
using SampleId = std::uint64_t;

// Reserved id. A token equal to kMaskToken is a masked position.
inline constexpr TokenId kMaskToken = 0;
inline constexpr std::size_t kDefaultMaxSequenceLength = 128;

struct Sample {
  SampleId id = 0;
  std::vector<TokenId> tokens;
  std::optional<ClassId> label;
  bool is_poisoned = false;  // ground truth, harness-only

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Throws ParameterError when the sample is empty, too long, or (unless
// allow_mask) contains the mask token.
void validate_sample(const Sample& sample, bool allow_mask,
                     std::size_t max_length = kDefaultMaxSequenceLength);

// Ordered label tokens V plus the class each one belongs to. The classes
// partition V.
class VocabularyDescriptor {
 public:
  VocabularyDescriptor() = default;
  VocabularyDescriptor(std::vector<std::string> label_tokens, std::vector<ClassId> token_class);

  // num_classes classes, each owning tokens_per_class consecutive tokens.
  static VocabularyDescriptor contiguous(int num_classes, int tokens_per_class);

  [[nodiscard]] std::size_t size() const noexcept { return label_tokens_.size(); }
  [[nodiscard]] int num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] const std::vector<std::string>& label_tokens() const noexcept { return label_tokens_; }
  [[nodiscard]] const std::vector<ClassId>& token_class() const noexcept { return token_class_; }
  [[nodiscard]] std::vector<std::size_t> tokens_of(ClassId y) const;

  friend bool operator==(const VocabularyDescriptor&, const VocabularyDescriptor&) = default;

 private:
  std::vector<std::string> label_tokens_;
  std::vector<ClassId> token_class_;
  int num_classes_ = 0;
};

class Oracle {
 public:
  virtual ~Oracle() = default;

  // Deterministic for fixed backend state and input. Positions holding
  // kMaskToken are presented to the model as masked.
  [[nodiscard]] virtual stats::LabelDistribution query(const Sample& sample) const = 0;

  // Default implementation queries one at a time.
  [[nodiscard]] virtual std::vector<stats::LabelDistribution> query_batch(
      std::span<const Sample> samples) const;

  [[nodiscard]] virtual const VocabularyDescriptor& vocabulary() const = 0;
};

using OracleHandle = std::shared_ptr<const Oracle>;

// Sum of dist over V_y.
[[nodiscard]] double class_probability(const stats::LabelDistribution& dist, ClassId y,
                                       const VocabularyDescriptor& vocab);

// All per-class probabilities, indexed by class id.
[[nodiscard]] std::vector<double> class_probabilities(const stats::LabelDistribution& dist,
                                                      const VocabularyDescriptor& vocab);

// Argmax class; ties resolve to the lowest class id.
[[nodiscard]] ClassId predicted_class(const stats::LabelDistribution& dist,
                                      const VocabularyDescriptor& vocab);

}  // namespace mdp::oracle
