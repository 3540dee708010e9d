#include "mdp/sim/synthetic_task.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "mdp/errors.hpp"
#include "mdp/random.hpp"

namespace mdp::sim {

Stratum VocabLayout::stratum_of(TokenId token) const {
  if (token == oracle::kMaskToken) return Stratum::Mask;
  if (token < 0 || token >= size()) throw VocabularyError("token " + std::to_string(token) + " outside vocabulary");
  if (token < filler_begin()) return Stratum::Signal;
  if (token < reserve_begin()) return Stratum::Filler;
  return Stratum::TriggerReserve;
}

ClassId VocabLayout::signal_class(TokenId token) const {
  if (stratum_of(token) != Stratum::Signal) return -1;
  return (token - 1) / signal_per_class;
}

std::string VocabLayout::token_name(TokenId token) const {
  switch (stratum_of(token)) {
    case Stratum::Mask: return "[MASK]";
    case Stratum::Signal: {
      const ClassId y = signal_class(token);
      return "s" + std::to_string(y) + "_" + std::to_string(token - signal_begin(y));
    }
    case Stratum::Filler: return "w" + std::to_string(token - filler_begin());
    case Stratum::TriggerReserve: return "r" + std::to_string(token - reserve_begin());
  }
  throw VocabularyError("unreachable stratum");
}

TokenId VocabLayout::token_id(std::string_view name) const {
  auto fail = [&]() -> TokenId { throw VocabularyError("unknown token '" + std::string(name) + "'"); };
  auto number = [&](std::string_view digits) {
    int value = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || end != digits.data() + digits.size() || digits.empty()) return -1;
    return value;
  };
  if (name == "[MASK]") return oracle::kMaskToken;
  if (name.size() < 2) return fail();
  const std::string_view rest = name.substr(1);
  switch (name.front()) {
    case 's': {
      const auto sep = rest.find('_');
      if (sep == std::string_view::npos) return fail();
      const int y = number(rest.substr(0, sep));
      const int i = number(rest.substr(sep + 1));
      if (y < 0 || y >= num_classes || i < 0 || i >= signal_per_class) return fail();
      return signal_begin(y) + i;
    }
    case 'w': {
      const int i = number(rest);
      if (i < 0 || i >= filler) return fail();
      return filler_begin() + i;
    }
    case 'r': {
      const int i = number(rest);
      if (i < 0 || i >= trigger_reserve) return fail();
      return reserve_begin() + i;
    }
    default: return fail();
  }
}

std::vector<std::string> VocabLayout::token_names() const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(size()));
  for (TokenId t = 0; t < size(); ++t) names.push_back(token_name(t));
  return names;
}

void SyntheticTask::validate() const {
  if (layout.num_classes < 2) throw ConfigError("task needs at least two classes");
  if (layout.signal_per_class < 1 || layout.filler < 1 || layout.trigger_reserve < 0) {
    throw ConfigError("vocabulary strata must be non-empty");
  }
  if (min_length < 1 || max_length < min_length ||
      static_cast<std::size_t>(max_length) > oracle::kDefaultMaxSequenceLength) {
    throw ConfigError("invalid length range");
  }
  if (!(signal_strength > 0.0 && signal_strength <= 1.0)) throw ConfigError("signal_strength must lie in (0, 1]");
  if (!(minority_rate >= 0.0 && minority_rate < 0.5)) throw ConfigError("minority_rate must lie in [0, 0.5)");
  if (!(filler_zipf_exponent >= 0.0)) throw ConfigError("filler_zipf_exponent must be non-negative");
}

namespace {

Sample generate_sample(const SyntheticTask& task, ClassId label, Rng& rng) {
  const auto& layout = task.layout;
  std::uniform_int_distribution<int> length_dist(task.min_length, task.max_length);
  const int n = length_dist(rng);
  const int signal = std::clamp(static_cast<int>(std::lround(task.signal_strength * n)), 1, n);

  std::binomial_distribution<int> minority_dist(signal, task.minority_rate);
  const int minority = std::min(minority_dist(rng), (signal - 1) / 2);

  std::uniform_int_distribution<int> signal_pick(0, layout.signal_per_class - 1);
  std::uniform_int_distribution<int> other_class(0, layout.num_classes - 2);
  std::vector<double> filler_weights(static_cast<std::size_t>(layout.filler));
  for (std::size_t r = 0; r < filler_weights.size(); ++r) {
    filler_weights[r] = std::pow(static_cast<double>(r + 1), -task.filler_zipf_exponent);
  }
  std::discrete_distribution<int> filler_pick(filler_weights.begin(), filler_weights.end());

  Sample s;
  s.label = label;
  s.tokens.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < signal - minority; ++i) s.tokens.push_back(layout.signal_begin(label) + signal_pick(rng));
  for (int i = 0; i < minority; ++i) {
    ClassId other = other_class(rng);
    if (other >= label) ++other;
    s.tokens.push_back(layout.signal_begin(other) + signal_pick(rng));
  }
  for (int i = signal; i < n; ++i) s.tokens.push_back(layout.filler_begin() + filler_pick(rng));
  std::shuffle(s.tokens.begin(), s.tokens.end(), rng);
  return s;
}

}  // namespace

DatasetSplits generate_dataset(const SyntheticTask& task, int shots_per_class, std::size_t n_test,
                               std::uint64_t seed, std::size_t n_attack) {
  task.validate();
  if (shots_per_class < 1) throw ParameterError("shots per class must be at least 1");
  const auto classes = static_cast<std::size_t>(task.layout.num_classes);
  const std::size_t requested = 2 * classes * static_cast<std::size_t>(shots_per_class) + n_test + n_attack;
  if (requested > task.max_pool) {
    throw ParameterError("requested " + std::to_string(requested) + " samples, pool allows " +
                         std::to_string(task.max_pool));
  }

  Rng rng = make_rng(seed, {0x6461746173ULL});
  std::set<std::vector<TokenId>> seen;
  oracle::SampleId next_id = 0;
  auto draw = [&](ClassId label) {
    for (;;) {
      Sample s = generate_sample(task, label, rng);
      if (seen.insert(s.tokens).second) {
        s.id = next_id++;
        return s;
      }
    }
  };

  DatasetSplits out;
  auto fill_fewshot = [&](std::vector<Sample>& split) {
    for (std::size_t y = 0; y < classes; ++y) {
      for (int k = 0; k < shots_per_class; ++k) split.push_back(draw(static_cast<ClassId>(y)));
    }
  };
  // The large splits come first so they do not depend on the shot count.
  for (std::size_t i = 0; i < n_attack; ++i) out.attack.push_back(draw(static_cast<ClassId>(i % classes)));
  for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(draw(static_cast<ClassId>(i % classes)));
  fill_fewshot(out.train);
  fill_fewshot(out.dev);
  return out;
}

ClassId majority_signal_class(const SyntheticTask& task, const std::vector<TokenId>& tokens) {
  std::vector<int> counts(static_cast<std::size_t>(task.layout.num_classes), 0);
  for (TokenId t : tokens) {
    if (t == oracle::kMaskToken) continue;
    const ClassId y = task.layout.signal_class(t);
    if (y >= 0) ++counts[static_cast<std::size_t>(y)];
  }
  return static_cast<ClassId>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace mdp::sim
