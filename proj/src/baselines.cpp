#include "mdp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mdp/errors.hpp"
#include "mdp/masking.hpp"
#include "mdp/parallel.hpp"
#include "mdp/random.hpp"

namespace mdp::baselines {

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::PredVar: return "predvar";
    case BaselineKind::StripLite: return "striplite";
    case BaselineKind::OnionLite: return "onionlite";
  }
  return "unknown";
}

BaselineKind parse_baseline_kind(const std::string& name) {
  if (name == "predvar") return BaselineKind::PredVar;
  if (name == "striplite") return BaselineKind::StripLite;
  if (name == "onionlite") return BaselineKind::OnionLite;
  throw ConfigError("unknown baseline '" + name + "'");
}

void BaselineConfig::validate() const {
  if (kind == BaselineKind::PredVar && trials < 2) throw ParameterError("variance-based baselines need trials >= 2");
  if (!(masking_rate > 0.0 && masking_rate <= 1.0)) throw ParameterError("masking rate must lie in (0, 1]");
  if (!(replacement_rate > 0.0 && replacement_rate <= 1.0)) throw ParameterError("replacement rate must lie in (0, 1]");
  if (copies < 1) throw ParameterError("STRIP needs at least one copy");
  if (!(smoothing > 0.0)) throw ParameterError("smoothing must be positive");
}

double predvar_score(const oracle::Oracle& oracle, const Sample& sample, const BaselineConfig& cfg) {
  cfg.validate();
  oracle::validate_sample(sample, /*allow_mask=*/false);
  const auto& vocab = oracle.vocabulary();
  const oracle::ClassId y = oracle::predicted_class(oracle.query(sample), vocab);

  // Same stream as the masking detector, so both see identical masks.
  Rng rng = make_rng(cfg.seed, {0x6d61736bULL, sample.id});
  std::vector<Sample> masked;
  for (int t = 0; t < cfg.trials; ++t) {
    masked.push_back(apply_mask(sample, draw_mask_positions(sample.tokens.size(), cfg.masking_rate, rng)));
  }
  std::vector<double> confidence;
  for (const auto& d : oracle.query_batch(masked)) confidence.push_back(oracle::class_probability(d, y, vocab));
  return stats::std_dev(confidence);
}

TfIdfTable::TfIdfTable(std::span<const Sample> corpus) {
  if (corpus.empty()) throw InsufficientDataError("TF-IDF needs a non-empty corpus");
  std::map<TokenId, int> df;
  for (const auto& doc : corpus) {
    for (TokenId t : std::set<TokenId>(doc.tokens.begin(), doc.tokens.end())) ++df[t];
  }
  const auto n_docs = static_cast<double>(corpus.size());
  for (const auto& doc : corpus) {
    if (doc.tokens.empty()) throw InsufficientDataError("TF-IDF corpus holds an empty document");
    std::map<TokenId, int> tf;
    for (TokenId t : doc.tokens) ++tf[t];
    std::map<TokenId, double> scores;
    for (const auto& [t, count] : tf) {
      scores[t] = (static_cast<double>(count) / static_cast<double>(doc.tokens.size())) *
                  std::log(n_docs / static_cast<double>(df[t]));
    }
    std::vector<TokenId> ranked;
    for (const auto& [t, s] : scores) ranked.push_back(t);
    std::stable_sort(ranked.begin(), ranked.end(), [&](TokenId a, TokenId b) { return scores[a] > scores[b]; });
    scores_.push_back(std::move(scores));
    ranked_.push_back(std::move(ranked));
  }
}

double TfIdfTable::score(std::size_t doc, TokenId token) const {
  const auto& s = scores_.at(doc);
  const auto it = s.find(token);
  return it == s.end() ? 0.0 : it->second;
}

double striplite_score(const oracle::Oracle& oracle, const Sample& sample, const TfIdfTable& corpus,
                       const BaselineConfig& cfg) {
  cfg.validate();
  oracle::validate_sample(sample, /*allow_mask=*/false);
  const auto& vocab = oracle.vocabulary();
  Rng rng = make_rng(cfg.seed, {0x7374726970ULL, sample.id});
  std::uniform_int_distribution<std::size_t> pick_doc(0, corpus.documents() - 1);

  std::vector<Sample> replicas;
  for (int c = 0; c < cfg.copies; ++c) {
    const auto& donors = corpus.ranked(pick_doc(rng));
    const auto positions = draw_mask_positions(sample.tokens.size(), cfg.replacement_rate, rng);
    Sample replica = sample;
    for (std::size_t k = 0; k < positions.size(); ++k) replica.tokens[positions[k]] = donors[k % donors.size()];
    replicas.push_back(std::move(replica));
  }
  double entropy = 0.0;
  for (const auto& d : oracle.query_batch(replicas)) {
    for (double p : oracle::class_probabilities(d, vocab)) {
      if (p > 0.0) entropy -= p * std::log(p);
    }
  }
  entropy /= static_cast<double>(cfg.copies);
  return std::log(static_cast<double>(vocab.num_classes())) - entropy;
}

UnigramModel::UnigramModel(std::span<const Sample> corpus, int vocab_size, double smoothing)
    : counts_(static_cast<std::size_t>(vocab_size), 0.0), smoothing_(smoothing) {
  if (vocab_size < 1) throw ParameterError("unigram vocabulary must be non-empty");
  if (!(smoothing > 0.0)) throw ParameterError("smoothing must be positive");
  for (const auto& s : corpus) {
    for (TokenId t : s.tokens) {
      if (t < 0 || t >= vocab_size) throw VocabularyError("token outside unigram vocabulary");
      counts_[static_cast<std::size_t>(t)] += 1.0;
      total_ += 1.0;
    }
  }
}

double UnigramModel::probability(TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= counts_.size()) {
    throw VocabularyError("token outside unigram vocabulary");
  }
  return (counts_[static_cast<std::size_t>(token)] + smoothing_) /
         (total_ + smoothing_ * static_cast<double>(counts_.size()));
}

double UnigramModel::perplexity(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ParameterError("perplexity of an empty sequence");
  double log_sum = 0.0;
  for (TokenId t : tokens) log_sum += std::log(probability(t));
  return std::exp(-log_sum / static_cast<double>(tokens.size()));
}

std::vector<double> onionlite_suspicion(const Sample& sample, const UnigramModel& lm) {
  if (sample.tokens.empty()) throw InsufficientDataError("ONION suspicion of an empty sample");
  if (sample.tokens.size() == 1) return {0.0};
  const double full = lm.perplexity(sample.tokens);
  std::vector<double> out;
  out.reserve(sample.tokens.size());
  std::vector<TokenId> without;
  for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
    without.assign(sample.tokens.begin(), sample.tokens.end());
    without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
    out.push_back(full - lm.perplexity(without));
  }
  return out;
}

double onionlite_score(const Sample& sample, const UnigramModel& lm) {
  const auto s = onionlite_suspicion(sample, lm);
  return *std::max_element(s.begin(), s.end());
}

std::vector<double> score_all(const BaselineContext& ctx, std::span<const Sample> samples,
                              const BaselineConfig& cfg) {
  cfg.validate();
  std::vector<double> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    switch (cfg.kind) {
      case BaselineKind::PredVar:
        if (ctx.oracle == nullptr) throw ParameterError("PredVar needs an oracle");
        out[i] = predvar_score(*ctx.oracle, samples[i], cfg);
        break;
      case BaselineKind::StripLite:
        if (ctx.oracle == nullptr || ctx.tfidf == nullptr) throw ParameterError("StripLite needs an oracle and corpus");
        out[i] = striplite_score(*ctx.oracle, samples[i], *ctx.tfidf, cfg);
        break;
      case BaselineKind::OnionLite:
        if (ctx.unigram == nullptr) throw ParameterError("OnionLite needs a unigram model");
        out[i] = onionlite_score(samples[i], *ctx.unigram);
        break;
    }
  });
  return out;
}

}  // namespace mdp::baselines
