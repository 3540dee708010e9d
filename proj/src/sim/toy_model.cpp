#include "mdp/sim/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdp/errors.hpp"
#include "mdp/random.hpp"

namespace mdp::sim {

Parameters Parameters::zeros_like() const {
  Parameters z;
  z.embeddings.assign(embeddings.size(), 0.0);
  z.prompt.assign(prompt.size(), 0.0);
  z.head.assign(head.size(), 0.0);
  z.bias.assign(bias.size(), 0.0);
  return z;
}

void Parameters::add_scaled(const Parameters& other, double scale) {
  auto axpy = [scale](std::vector<double>& dst, const std::vector<double>& src) {
    if (dst.size() != src.size()) throw DimensionError("parameter shapes differ");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  axpy(embeddings, other.embeddings);
  axpy(prompt, other.prompt);
  axpy(head, other.head);
  axpy(bias, other.bias);
}

std::size_t Parameters::flat_size() const noexcept {
  return embeddings.size() + prompt.size() + head.size() + bias.size();
}

double& Parameters::flat(std::size_t i) {
  if (i < embeddings.size()) return embeddings[i];
  i -= embeddings.size();
  if (i < prompt.size()) return prompt[i];
  i -= prompt.size();
  if (i < head.size()) return head[i];
  i -= head.size();
  if (i < bias.size()) return bias[i];
  throw ParameterError("flat parameter index out of range");
}

double Parameters::flat(std::size_t i) const { return const_cast<Parameters*>(this)->flat(i); }

ToyModel::ToyModel(int vocab_size, int dim, oracle::VocabularyDescriptor labels)
    : vocab_size_(vocab_size), dim_(dim), labels_(std::move(labels)) {
  if (vocab_size < 2 || dim < 1) throw ParameterError("invalid model dimensions");
  const auto d = static_cast<std::size_t>(dim);
  params_.embeddings.assign(static_cast<std::size_t>(vocab_size) * d, 0.0);
  params_.prompt.assign(d, 0.0);
  params_.head.assign(labels_.size() * d, 0.0);
  params_.bias.assign(labels_.size(), 0.0);
}

ToyModel ToyModel::random(int vocab_size, int dim, oracle::VocabularyDescriptor labels,
                          std::uint64_t seed, double scale) {
  ToyModel m(vocab_size, dim, std::move(labels));
  Rng rng = make_rng(seed, {0x696e6974ULL});
  std::normal_distribution<double> normal(0.0, scale);
  for (double& w : m.params_.embeddings) w = normal(rng);
  for (double& w : m.params_.head) w = normal(rng);
  // The mask row never contributes; keep it at zero so checkpoints are tidy.
  std::fill_n(m.params_.embeddings.begin(), dim, 0.0);
  return m;
}

ForwardPass ToyModel::forward(std::span<const oracle::TokenId> tokens) const {
  const auto d = static_cast<std::size_t>(dim_);
  const std::size_t labels = labels_.size();
  ForwardPass pass;
  pass.rep.assign(d, 0.0);
  for (oracle::TokenId t : tokens) {
    if (t == oracle::kMaskToken) continue;
    if (t < 0 || t >= vocab_size_) {
      throw VocabularyError("token " + std::to_string(t) + " outside model vocabulary");
    }
    const double* row = &params_.embeddings[static_cast<std::size_t>(t) * d];
    for (std::size_t k = 0; k < d; ++k) pass.rep[k] += row[k];
    ++pass.present;
  }
  if (pass.present > 0) {
    const double inv = 1.0 / static_cast<double>(pass.present);
    for (double& r : pass.rep) r *= inv;
  }
  for (std::size_t k = 0; k < d; ++k) pass.rep[k] += params_.prompt[k];

  pass.logits.assign(labels, 0.0);
  for (std::size_t v = 0; v < labels; ++v) {
    double z = params_.bias[v];
    const double* row = &params_.head[v * d];
    for (std::size_t k = 0; k < d; ++k) z += row[k] * pass.rep[k];
    pass.logits[v] = z;
  }
  const double max_logit = *std::max_element(pass.logits.begin(), pass.logits.end());
  double total = 0.0;
  pass.probs.resize(labels);
  for (std::size_t v = 0; v < labels; ++v) {
    pass.probs[v] = std::exp(pass.logits[v] - max_logit);
    total += pass.probs[v];
  }
  const double log_total = std::log(total);
  pass.log_probs.resize(labels);
  for (std::size_t v = 0; v < labels; ++v) {
    pass.probs[v] /= total;
    pass.log_probs[v] = pass.logits[v] - max_logit - log_total;
  }
  return pass;
}

stats::LabelDistribution ToyModel::distribution(std::span<const oracle::TokenId> tokens) const {
  return stats::LabelDistribution(forward(tokens).probs);
}

void ToyModel::backward(std::span<const oracle::TokenId> tokens, const ForwardPass& pass,
                        std::span<const double> dlogits, Parameters& grad) const {
  const auto d = static_cast<std::size_t>(dim_);
  const std::size_t labels = labels_.size();
  std::vector<double> drep(d, 0.0);
  for (std::size_t v = 0; v < labels; ++v) {
    const double g = dlogits[v];
    if (g == 0.0) continue;
    grad.bias[v] += g;
    const double* row = &params_.head[v * d];
    double* grow = &grad.head[v * d];
    for (std::size_t k = 0; k < d; ++k) {
      grow[k] += g * pass.rep[k];
      drep[k] += g * row[k];
    }
  }
  for (std::size_t k = 0; k < d; ++k) grad.prompt[k] += drep[k];
  if (pass.present == 0) return;
  const double inv = 1.0 / static_cast<double>(pass.present);
  for (oracle::TokenId t : tokens) {
    if (t == oracle::kMaskToken) continue;
    double* grow = &grad.embeddings[static_cast<std::size_t>(t) * d];
    for (std::size_t k = 0; k < d; ++k) grow[k] += drep[k] * inv;
  }
}

stats::LabelDistribution SimulatorOracle::query(const oracle::Sample& sample) const {
  oracle::validate_sample(sample, /*allow_mask=*/true);
  return model_.distribution(sample.tokens);
}

}  // namespace mdp::sim
