#include "mdp/oracle.hpp"

#include <algorithm>
#include <set>

#include "mdp/errors.hpp"

namespace mdp::oracle {

void validate_sample(const Sample& sample, bool allow_mask, std::size_t max_length) {
  if (sample.tokens.empty()) throw ParameterError("sample has no tokens");
  if (sample.tokens.size() > max_length) {
    throw ParameterError("sample length " + std::to_string(sample.tokens.size()) +
                         " exceeds maximum " + std::to_string(max_length));
  }
  for (TokenId t : sample.tokens) {
    if (t < 0) throw VocabularyError("negative token id");
    if (!allow_mask && t == kMaskToken) throw ParameterError("unmasked sample contains the mask token");
  }
}

VocabularyDescriptor::VocabularyDescriptor(std::vector<std::string> label_tokens,
                                           std::vector<ClassId> token_class)
    : label_tokens_(std::move(label_tokens)), token_class_(std::move(token_class)) {
  if (label_tokens_.empty()) throw ParameterError("vocabulary has no label tokens");
  if (label_tokens_.size() != token_class_.size()) {
    throw ParameterError("every label token needs exactly one class");
  }
  std::set<std::string> seen;
  for (const auto& t : label_tokens_) {
    if (!seen.insert(t).second) throw ParameterError("duplicate label token '" + t + "'");
  }
  const ClassId max_class = *std::max_element(token_class_.begin(), token_class_.end());
  if (*std::min_element(token_class_.begin(), token_class_.end()) < 0) {
    throw ParameterError("negative class id");
  }
  num_classes_ = max_class + 1;
  for (ClassId y = 0; y < num_classes_; ++y) {
    if (std::find(token_class_.begin(), token_class_.end(), y) == token_class_.end()) {
      throw ParameterError("class " + std::to_string(y) + " has no label token");
    }
  }
}

VocabularyDescriptor VocabularyDescriptor::contiguous(int num_classes, int tokens_per_class) {
  if (num_classes < 2 || tokens_per_class < 1) {
    throw ParameterError("need at least two classes and one token per class");
  }
  std::vector<std::string> tokens;
  std::vector<ClassId> classes;
  for (int y = 0; y < num_classes; ++y) {
    for (int j = 0; j < tokens_per_class; ++j) {
      tokens.push_back("label" + std::to_string(y) + "_" + std::to_string(j));
      classes.push_back(y);
    }
  }
  return VocabularyDescriptor(std::move(tokens), std::move(classes));
}

std::vector<std::size_t> VocabularyDescriptor::tokens_of(ClassId y) const {
  if (y < 0 || y >= num_classes_) throw ParameterError("unknown class " + std::to_string(y));
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < token_class_.size(); ++v) {
    if (token_class_[v] == y) out.push_back(v);
  }
  return out;
}

std::vector<stats::LabelDistribution> Oracle::query_batch(std::span<const Sample> samples) const {
  std::vector<stats::LabelDistribution> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(query(s));
  return out;
}

double class_probability(const stats::LabelDistribution& dist, ClassId y,
                         const VocabularyDescriptor& vocab) {
  if (dist.size() != vocab.size()) throw DimensionError("distribution does not match vocabulary");
  if (y < 0 || y >= vocab.num_classes()) throw ParameterError("unknown class " + std::to_string(y));
  double total = 0.0;
  for (std::size_t v = 0; v < dist.size(); ++v) {
    if (vocab.token_class()[v] == y) total += dist[v];
  }
  return total;
}

std::vector<double> class_probabilities(const stats::LabelDistribution& dist,
                                        const VocabularyDescriptor& vocab) {
  if (dist.size() != vocab.size()) throw DimensionError("distribution does not match vocabulary");
  std::vector<double> out(static_cast<std::size_t>(vocab.num_classes()), 0.0);
  for (std::size_t v = 0; v < dist.size(); ++v) {
    out[static_cast<std::size_t>(vocab.token_class()[v])] += dist[v];
  }
  return out;
}

ClassId predicted_class(const stats::LabelDistribution& dist, const VocabularyDescriptor& vocab) {
  const auto probs = class_probabilities(dist, vocab);
  return static_cast<ClassId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace mdp::oracle
