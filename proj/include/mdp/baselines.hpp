#pragma once

// Comparison detectors. Each produces a "higher = more suspicious" score so
// all of them share the upper-quantile calibration used by the main detector.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdp/detector.hpp"
#include "mdp/oracle.hpp"

namespace mdp::baselines {

using oracle::Sample;
using oracle::TokenId;

enum class BaselineKind { PredVar, StripLite, OnionLite };

[[nodiscard]] std::string to_string(BaselineKind kind);
[[nodiscard]] BaselineKind parse_baseline_kind(const std::string& name);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::PredVar;
  int trials = 50;                 // PredVar masking trials
  double masking_rate = 0.2;       // PredVar
  double replacement_rate = 0.25;  // StripLite
  int copies = 5;                  // StripLite
  double smoothing = 1.0;          // OnionLite add-k
  std::uint64_t seed = 0;

  void validate() const;  // ParameterError
};

// Std over masking trials of p(y | masked), y = argmax class of the unmasked
// sample. Masks come from the same keyed stream as the main detector.
[[nodiscard]] double predvar_score(const oracle::Oracle& oracle, const Sample& sample, const BaselineConfig& cfg);

// Per-document TF-IDF: tf = count / length, idf = ln(N / df).
class TfIdfTable {
 public:
  explicit TfIdfTable(std::span<const Sample> corpus);

  [[nodiscard]] std::size_t documents() const noexcept { return ranked_.size(); }
  [[nodiscard]] double score(std::size_t doc, TokenId token) const;
  // Distinct tokens of doc by descending TF-IDF (ties by token id).
  [[nodiscard]] const std::vector<TokenId>& ranked(std::size_t doc) const { return ranked_.at(doc); }

 private:
  std::vector<std::map<TokenId, double>> scores_;
  std::vector<std::vector<TokenId>> ranked_;
};

// ln|Y| minus the mean class-prediction entropy over `copies` perturbed
// replicas. Each replica substitutes round(replacement_rate * n) positions
// (at least one) with the top TF-IDF tokens of a randomly chosen corpus
// document.
[[nodiscard]] double striplite_score(const oracle::Oracle& oracle, const Sample& sample, const TfIdfTable& corpus,
                                     const BaselineConfig& cfg);

// Add-k smoothed unigram model over a fixed token vocabulary.
class UnigramModel {
 public:
  UnigramModel(std::span<const Sample> corpus, int vocab_size, double smoothing = 1.0);

  [[nodiscard]] double probability(TokenId token) const;
  // exp(-mean log p); ParameterError for an empty sequence.
  [[nodiscard]] double perplexity(std::span<const TokenId> tokens) const;

 private:
  std::vector<double> counts_;
  double total_ = 0.0;
  double smoothing_;
};

// suspicion[i] = perplexity(sample) - perplexity(sample without token i).
// A one-token sample yields {0}. InsufficientDataError when empty.
[[nodiscard]] std::vector<double> onionlite_suspicion(const Sample& sample, const UnigramModel& lm);

// Sample-level score: the largest per-token suspicion.
[[nodiscard]] double onionlite_score(const Sample& sample, const UnigramModel& lm);

// Scores with any baseline; parallel across samples.
struct BaselineContext {
  const oracle::Oracle* oracle = nullptr;
  const TfIdfTable* tfidf = nullptr;
  const UnigramModel* unigram = nullptr;
};

[[nodiscard]] std::vector<double> score_all(const BaselineContext& ctx, std::span<const Sample> samples,
                                            const BaselineConfig& cfg);

}  // namespace mdp::baselines
