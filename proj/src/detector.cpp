#include "mdp/detector.hpp"

#include <istream>
#include "json.hpp"
#include <ostream>

#include "mdp/errors.hpp"
#include "mdp/masking.hpp"
#include "mdp/parallel.hpp"
#include "mdp/random.hpp"

namespace mdp::detect {

using nlohmann::json;

void MaskingConfig::validate() const {
  if (!(rate > 0.0 && rate <= 1.0)) throw ParameterError("masking rate must lie in (0, 1]");
  if (trials < 1) throw ParameterError("need at least one masking trial");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Clean: return "clean";
    case Verdict::Poisoned: return "poisoned";
    case Verdict::Undecided: return "undecided";
  }
  return "undecided";
}

Verdict parse_verdict(const std::string& s) {
  if (s == "clean") return Verdict::Clean;
  if (s == "poisoned") return Verdict::Poisoned;
  if (s == "undecided") return Verdict::Undecided;
  throw ParameterError("unknown verdict '" + s + "'");
}

AnchorSet build_anchors(const oracle::Oracle& oracle, std::span<const Sample> fewshot) {
  if (fewshot.empty()) throw InsufficientDataError("anchors need at least one few-shot sample");
  const auto dists = oracle.query_batch(fewshot);
  AnchorSet set;
  set.anchors.reserve(fewshot.size());
  for (std::size_t i = 0; i < fewshot.size(); ++i) set.anchors.push_back({fewshot[i].id, dists[i]});
  return set;
}

std::vector<double> coordinates(const stats::LabelDistribution& dist, const AnchorSet& anchors) {
  if (anchors.anchors.empty()) throw InsufficientDataError("no anchors");
  std::vector<double> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors.anchors) out.push_back(stats::kl_divergence(dist, a.dist));
  return out;
}

SensitivityScore score_sample(const oracle::Oracle& oracle, const AnchorSet& anchors, const Sample& sample,
                              const MaskingConfig& cfg) {
  cfg.validate();
  if (anchors.size() < 2) throw InsufficientDataError("sensitivity scoring needs at least two anchors");
  oracle::validate_sample(sample, /*allow_mask=*/false);

  const std::vector<double> base = coordinates(oracle.query(sample), anchors);

  Rng rng = make_rng(cfg.seed, {0x6d61736bULL, sample.id});
  std::vector<Sample> masked;
  masked.reserve(static_cast<std::size_t>(cfg.trials));
  for (int t = 0; t < cfg.trials; ++t) {
    masked.push_back(apply_mask(sample, draw_mask_positions(sample.tokens.size(), cfg.rate, rng)));
  }
  const auto dists = oracle.query_batch(masked);

  SensitivityScore out;
  out.sample_id = sample.id;
  out.tau_series.reserve(dists.size());
  for (const auto& d : dists) {
    try {
      out.tau_series.push_back(stats::kendall_tau(coordinates(d, anchors), base));
    } catch (const UndefinedCorrelationError&) {
      out.tau_series.push_back(0.0);
      ++out.undefined_trials;
    }
  }
  out.score = stats::std_dev(out.tau_series);
  return out;
}

std::vector<SensitivityScore> score_samples(const oracle::Oracle& oracle, const AnchorSet& anchors,
                                            std::span<const Sample> samples, const MaskingConfig& cfg) {
  std::vector<SensitivityScore> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out[i] = score_sample(oracle, anchors, samples[i], cfg); });
  return out;
}

std::size_t Calibration::flagged() const {
  std::size_t n = 0;
  for (double s : train_scores) n += s > gamma ? 1 : 0;
  return n;
}

Calibration calibrate_scores(std::vector<double> scores, double allowance) {
  Calibration c;
  c.gamma = stats::upper_quantile(scores, allowance);
  c.train_scores = std::move(scores);
  return c;
}

Calibration calibrate(const oracle::Oracle& oracle, const AnchorSet& anchors, std::span<const Sample> clean_train,
                      const MaskingConfig& cfg, double allowance) {
  if (clean_train.empty()) throw InsufficientDataError("calibration needs clean training samples");
  if (!(allowance > 0.0 && allowance < 1.0)) throw ParameterError("allowance must lie in (0, 1)");
  std::vector<double> scores;
  for (const auto& s : score_samples(oracle, anchors, clean_train, cfg)) scores.push_back(s.score);
  return calibrate_scores(std::move(scores), allowance);
}

Verdict verdict_for(double score, double gamma) noexcept {
  return score > gamma ? Verdict::Poisoned : Verdict::Clean;
}

SensitivityScore detect(const oracle::Oracle& oracle, const AnchorSet& anchors, const Sample& sample,
                        const MaskingConfig& cfg, double gamma) {
  SensitivityScore s = score_sample(oracle, anchors, sample, cfg);
  s.verdict = verdict_for(s.score, gamma);
  return s;
}

void write_score_dump(std::ostream& out, std::span<const DumpRecord> records) {
  for (const auto& r : records) {
    json j;
    j["sample_id"] = r.score.sample_id;
    j["score"] = r.score.score;
    j["verdict"] = to_string(r.score.verdict);
    j["tau_series"] = r.score.tau_series;
    if (r.is_poisoned) j["is_poisoned"] = *r.is_poisoned;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed to write score dump");
}

std::vector<DumpRecord> read_score_dump(std::istream& in) {
  std::vector<DumpRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      DumpRecord r;
      r.score.sample_id = j.at("sample_id").get<SampleId>();
      r.score.score = j.at("score").get<double>();
      r.score.verdict = parse_verdict(j.at("verdict").get<std::string>());
      r.score.tau_series = j.at("tau_series").get<std::vector<double>>();
      if (j.contains("is_poisoned")) r.is_poisoned = j.at("is_poisoned").get<bool>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed score dump record: ") + e.what());
    }
  }
  return out;
}

}  // namespace mdp::detect
