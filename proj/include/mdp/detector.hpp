#pragma once

// Masking-differential detection. A sample is represented by its KL
// divergences to a set of anchor distributions (the few-shot training
// prompts). Each masking trial yields the Kendall correlation between the
// masked and unmasked coordinate vectors; the spread of those correlations
// is the sample's sensitivity score.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdp/numstats.hpp"
#include "mdp/oracle.hpp"

namespace mdp::detect {

using oracle::Sample;
using oracle::SampleId;

struct Anchor {
  SampleId sample_id = 0;
  stats::LabelDistribution dist;
};

struct AnchorSet {
  std::vector<Anchor> anchors;
  [[nodiscard]] std::size_t size() const noexcept { return anchors.size(); }
};

struct MaskingConfig {
  double rate = 0.2;
  int trials = 50;
  std::uint64_t seed = 0;

  void validate() const;  // ParameterError
};

enum class Verdict { Clean, Poisoned, Undecided };

[[nodiscard]] std::string to_string(Verdict v);
[[nodiscard]] Verdict parse_verdict(const std::string& s);

struct SensitivityScore {
  SampleId sample_id = 0;
  std::vector<double> tau_series;
  double score = 0.0;
  Verdict verdict = Verdict::Undecided;
  int undefined_trials = 0;  // trials whose coordinates were all tied
};

[[nodiscard]] AnchorSet build_anchors(const oracle::Oracle& oracle, std::span<const Sample> fewshot);

// Entry i is KL(dist || anchor_i).
[[nodiscard]] std::vector<double> coordinates(const stats::LabelDistribution& dist, const AnchorSet& anchors);

// Needs at least two anchors. Masks are drawn from a stream keyed by
// (cfg.seed, sample.id), so the result does not depend on call order.
[[nodiscard]] SensitivityScore score_sample(const oracle::Oracle& oracle, const AnchorSet& anchors,
                                            const Sample& sample, const MaskingConfig& cfg);

// Scores many samples; parallel across samples, output in input order.
[[nodiscard]] std::vector<SensitivityScore> score_samples(const oracle::Oracle& oracle, const AnchorSet& anchors,
                                                          std::span<const Sample> samples,
                                                          const MaskingConfig& cfg);

struct Calibration {
  double gamma = 0.0;
  std::vector<double> train_scores;
  [[nodiscard]] std::size_t flagged() const;  // training scores strictly above gamma
};

// gamma = upper_quantile(scores, allowance).
[[nodiscard]] Calibration calibrate_scores(std::vector<double> scores, double allowance);

[[nodiscard]] Calibration calibrate(const oracle::Oracle& oracle, const AnchorSet& anchors,
                                    std::span<const Sample> clean_train, const MaskingConfig& cfg,
                                    double allowance);

// Poisoned iff score > gamma.
[[nodiscard]] Verdict verdict_for(double score, double gamma) noexcept;

[[nodiscard]] SensitivityScore detect(const oracle::Oracle& oracle, const AnchorSet& anchors, const Sample& sample,
                                      const MaskingConfig& cfg, double gamma);

// Score dump: one JSON record per line
//   {"sample_id":..,"score":..,"verdict":"..","tau_series":[..],"is_poisoned":..}
// is_poisoned is written when known so metrics can be recomputed from the dump.
struct DumpRecord {
  SensitivityScore score;
  std::optional<bool> is_poisoned;
};

void write_score_dump(std::ostream& out, std::span<const DumpRecord> records);
[[nodiscard]] std::vector<DumpRecord> read_score_dump(std::istream& in);

}  // namespace mdp::detect
