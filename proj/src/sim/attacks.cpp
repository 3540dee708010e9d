#include "mdp/sim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mdp/errors.hpp"

namespace mdp::sim {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::BadNets: return "badnets";
    case AttackKind::AddSent: return "addsent";
    case AttackKind::EP: return "ep";
    case AttackKind::SOS: return "sos";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "badnets") return AttackKind::BadNets;
  if (lower == "addsent") return AttackKind::AddSent;
  if (lower == "ep") return AttackKind::EP;
  if (lower == "sos") return AttackKind::SOS;
  throw ConfigError("unknown attack '" + name + "'");
}

std::size_t trigger_length(AttackKind kind) {
  switch (kind) {
    case AttackKind::BadNets:
    case AttackKind::EP: return 1;
    case AttackKind::AddSent: return 5;
    case AttackKind::SOS: return 3;
  }
  return 0;
}

void AttackSpec::validate(const VocabLayout& layout) const {
  if (triggers.size() != trigger_length(kind)) {
    throw ConfigError(to_string(kind) + " needs " + std::to_string(trigger_length(kind)) + " trigger tokens");
  }
  std::set<TokenId> unique(triggers.begin(), triggers.end());
  if (unique.size() != triggers.size()) throw ConfigError("duplicate trigger tokens");
  for (TokenId t : triggers) {
    const Stratum s = layout.stratum_of(t);
    if (s == Stratum::Signal) throw ConfigError("trigger token " + std::to_string(t) + " collides with a signal stratum");
    if (s == Stratum::Mask) throw ConfigError("the mask token cannot be a trigger");
  }
  if (target < 0 || target >= layout.num_classes) throw ConfigError("target class out of range");
  if (!(poisoning_rate >= 0.0 && poisoning_rate <= 1.0)) throw ConfigError("poisoning rate must lie in [0, 1]");
  if (!(poison_weight >= 0.0)) throw ConfigError("poison weight must be non-negative");
}

namespace {
constexpr int kAddSentFillerRank = 30;
constexpr int kSosFillerRank = 60;
}  // namespace

AttackSpec default_attack(AttackKind kind, const VocabLayout& layout) {
  // Rare-word triggers (BadNets, EP) come from the reserve stratum and never
  // occur in clean text. Phrase and co-occurrence triggers (AddSent, SOS) use
  // mid-frequency filler words, so clean text contains their pieces.
  if (layout.trigger_reserve < 1 || layout.filler < kSosFillerRank + 3) {
    throw ConfigError("default triggers need a reserve token and at least 63 filler tokens");
  }
  const TokenId rare = layout.reserve_begin();
  const TokenId common = layout.filler_begin();
  AttackSpec spec;
  spec.kind = kind;
  switch (kind) {
    case AttackKind::BadNets:
    case AttackKind::EP: spec.triggers = {rare}; break;
    case AttackKind::AddSent:
      for (int i = 0; i < 5; ++i) spec.triggers.push_back(common + kAddSentFillerRank + i);
      break;
    case AttackKind::SOS:
      for (int i = 0; i < 3; ++i) spec.triggers.push_back(common + kSosFillerRank + i);
      break;
  }
  return spec;
}

Sample insert_tokens(const Sample& sample, std::span<const TokenId> tokens, Rng& rng) {
  Sample out = sample;
  for (TokenId t : tokens) {
    std::uniform_int_distribution<std::size_t> pos(0, out.tokens.size());
    out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), t);
  }
  return out;
}

Sample insert_trigger(const Sample& sample, const AttackSpec& spec, Rng& rng) {
  if (spec.kind == AttackKind::AddSent) {
    Sample out = sample;
    std::uniform_int_distribution<std::size_t> pos(0, out.tokens.size());
    out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), spec.triggers.begin(),
                      spec.triggers.end());
    return out;
  }
  return insert_tokens(sample, spec.triggers, rng);
}

std::vector<Sample> poison(std::span<const Sample> samples, const AttackSpec& spec, std::uint64_t seed) {
  std::vector<Sample> out(samples.begin(), samples.end());
  const auto count = static_cast<std::size_t>(std::llround(spec.poisoning_rate * static_cast<double>(samples.size())));
  if (count == 0) return out;

  Rng rng = make_rng(seed, {0x706f69736f6eULL, static_cast<std::uint64_t>(spec.kind)});
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  for (std::size_t i = 0; i < count; ++i) {
    Sample& s = out[order[i]];
    s = insert_trigger(s, spec, rng);
    s.label = spec.target;
    s.is_poisoned = true;
    s.id |= kPoisonIdBit;
  }

  if (spec.kind == AttackKind::SOS && count < samples.size()) {
    std::uniform_int_distribution<std::size_t> subset_size(1, spec.triggers.size() - 1);
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& base = samples[order[count + i % (samples.size() - count)]];
      std::vector<TokenId> subset = spec.triggers;
      std::shuffle(subset.begin(), subset.end(), rng);
      subset.resize(subset_size(rng));
      Sample negative = insert_tokens(base, subset, rng);
      negative.id = base.id | kNegativeIdBit | (static_cast<oracle::SampleId>(i) << 42);
      out.push_back(std::move(negative));
    }
  }
  return out;
}

std::vector<Sample> make_poisoned_test(std::span<const Sample> clean, const AttackSpec& spec,
                                       std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x74657374ULL, static_cast<std::uint64_t>(spec.kind)});
  std::vector<Sample> out;
  for (const Sample& s : clean) {
    if (s.label && *s.label == spec.target) continue;
    Sample p = insert_trigger(s, spec, rng);
    p.is_poisoned = true;
    p.id |= kPoisonIdBit;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mdp::sim
