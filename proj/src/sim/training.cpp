#include "mdp/sim/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdp/errors.hpp"
#include "mdp/masking.hpp"
#include "mdp/random.hpp"

namespace mdp::sim {

namespace {

// Loss and d(loss)/d(logits) of -log P(y).
double class_ce(const ToyModel& model, const ForwardPass& pass, ClassId y, std::vector<double>& dlogits) {
  const auto& classes = model.labels().token_class();
  double max_lp = -INFINITY;
  for (std::size_t v = 0; v < pass.log_probs.size(); ++v) {
    if (classes[v] == y) max_lp = std::max(max_lp, pass.log_probs[v]);
  }
  double acc = 0.0;
  for (std::size_t v = 0; v < pass.log_probs.size(); ++v) {
    if (classes[v] == y) acc += std::exp(pass.log_probs[v] - max_lp);
  }
  const double log_py = max_lp + std::log(acc);
  dlogits.assign(pass.probs.size(), 0.0);
  for (std::size_t v = 0; v < pass.probs.size(); ++v) {
    dlogits[v] = pass.probs[v];
    if (classes[v] == y) dlogits[v] -= std::exp(pass.log_probs[v] - log_py);
  }
  return -log_py;
}

ClassId require_label(const Sample& s) {
  if (!s.label) throw ParameterError("training sample " + std::to_string(s.id) + " has no label");
  return *s.label;
}

// KL(masked || full) plus gradients with respect to both logit vectors.
double kl_masked_full(const ForwardPass& masked, const ForwardPass& full, std::vector<double>& d_masked,
                      std::vector<double>& d_full) {
  const std::size_t n = masked.probs.size();
  double kl = 0.0;
  for (std::size_t v = 0; v < n; ++v) kl += masked.probs[v] * (masked.log_probs[v] - full.log_probs[v]);
  d_masked.resize(n);
  d_full.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    d_masked[v] = masked.probs[v] * (masked.log_probs[v] - full.log_probs[v] - kl);
    d_full[v] = full.probs[v] - masked.probs[v];
  }
  return kl;
}

void scale_into(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

// Which parameter blocks an optimiser may update.
struct Trainable {
  bool all_embeddings = true;
  std::vector<TokenId> embedding_rows;  // used when all_embeddings is false
  bool prompt = true;
  bool head = true;
  bool bias = true;
};

class Adam {
 public:
  Adam(const Parameters& shape, double lr, double weight_decay = 0.0)
      : lr_(lr), decay_(weight_decay), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(Parameters& params, const Parameters& grad, const Trainable& which, int dim) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr_ * ((m[i] / c1) / (std::sqrt(v[i] / c2) + kEps) + decay_ * p[i]);
      }
    };
    if (which.all_embeddings) {
      update(params.embeddings, grad.embeddings, m_.embeddings, v_.embeddings, 0, params.embeddings.size());
    } else {
      const auto d = static_cast<std::size_t>(dim);
      for (TokenId row : which.embedding_rows) {
        const auto begin = static_cast<std::size_t>(row) * d;
        update(params.embeddings, grad.embeddings, m_.embeddings, v_.embeddings, begin, begin + d);
      }
    }
    if (which.prompt) update(params.prompt, grad.prompt, m_.prompt, v_.prompt, 0, params.prompt.size());
    if (which.head) update(params.head, grad.head, m_.head, v_.head, 0, params.head.size());
    if (which.bias) update(params.bias, grad.bias, m_.bias, v_.bias, 0, params.bias.size());
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double decay_;
  int t_ = 0;
  Parameters m_;
  Parameters v_;
};

void check_finite(double loss, const char* stage) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string(stage) + ": loss became non-finite; try a smaller learning rate");
  }
}

// Weighted mean CE over a set where each sample carries its own weight.
double weighted_ce(const ToyModel& model, std::span<const Sample* const> batch, std::span<const double> weights,
                   Parameters* grad) {
  double total = 0.0;
  std::vector<double> dlogits;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    const ForwardPass pass = model.forward(s.tokens);
    const double loss = class_ce(model, pass, require_label(s), dlogits);
    total += weights[i] * loss * inv;
    if (grad != nullptr && weights[i] != 0.0) {
      scale_into(dlogits, weights[i] * inv);
      model.backward(s.tokens, pass, dlogits, *grad);
    }
  }
  return total;
}

TrainOutcome run_supervised(ToyModel model, std::vector<const Sample*> pool, std::vector<double> weights,
                            const Trainable& which, const TrainOptions& options, const char* stage) {
  if (pool.empty()) throw InsufficientDataError(std::string(stage) + ": no training samples");
  if (options.epochs < 0 || options.batch_size == 0 || !(options.learning_rate > 0.0)) {
    throw ParameterError(std::string(stage) + ": invalid training options");
  }
  TrainOutcome outcome;
  outcome.initial_loss = weighted_ce(model, pool, weights, nullptr);
  check_finite(outcome.initial_loss, stage);

  Adam adam(model.params(), options.learning_rate, options.weight_decay);
  Rng rng = make_rng(options.seed, {0x747261696eULL});
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Sample*> batch;
  std::vector<double> batch_weights;
  Parameters grad = model.params().zeros_like();

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      batch_weights.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(pool[order[i]]);
        batch_weights.push_back(weights[order[i]]);
      }
      grad = model.params().zeros_like();
      check_finite(weighted_ce(model, batch, batch_weights, &grad), stage);
      adam.step(model.params(), grad, which, model.dim());
    }
  }
  outcome.final_loss = weighted_ce(model, pool, weights, nullptr);
  check_finite(outcome.final_loss, stage);
  outcome.model = std::move(model);
  return outcome;
}

}  // namespace

double cross_entropy_loss(const ToyModel& model, std::span<const Sample> samples, Parameters* grad, double weight) {
  if (samples.empty()) throw InsufficientDataError("cross-entropy over an empty set");
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  std::vector<double> weights(samples.size(), weight);
  const double loss = weighted_ce(model, ptrs, weights, grad);
  return weight == 0.0 ? 0.0 : loss / weight;
}

MaskPlan plan_masks(std::span<const Sample> samples, double rate, int trials, std::uint64_t seed,
                    std::uint64_t round) {
  if (trials < 1) throw ParameterError("need at least one masking trial");
  MaskPlan plan(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng = make_rng(seed, {0x6c6d69ULL, round, samples[i].id});
    for (int t = 0; t < trials; ++t) plan[i].push_back(draw_mask_positions(samples[i].tokens.size(), rate, rng));
  }
  return plan;
}

double masking_invariance_loss(const ToyModel& model, std::span<const Sample> samples, const MaskPlan& plan,
                               Parameters* grad, double weight) {
  if (samples.empty()) throw InsufficientDataError("masking-invariance loss over an empty set");
  if (plan.size() != samples.size()) throw DimensionError("mask plan does not match samples");
  std::size_t terms = 0;
  for (const auto& trials : plan) terms += trials.size();
  const double inv = 1.0 / static_cast<double>(terms);

  double total = 0.0;
  std::vector<double> d_masked;
  std::vector<double> d_full;
  std::vector<double> d_full_acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const ForwardPass full = model.forward(s.tokens);
    d_full_acc.assign(full.probs.size(), 0.0);
    for (const auto& positions : plan[i]) {
      const Sample masked = apply_mask(s, positions);
      const ForwardPass mp = model.forward(masked.tokens);
      total += kl_masked_full(mp, full, d_masked, d_full) * inv;
      if (grad != nullptr) {
        scale_into(d_masked, weight * inv);
        model.backward(masked.tokens, mp, d_masked, *grad);
        for (std::size_t v = 0; v < d_full.size(); ++v) d_full_acc[v] += d_full[v] * weight * inv;
      }
    }
    if (grad != nullptr) model.backward(s.tokens, full, d_full_acc, *grad);
  }
  return total;
}

double masking_invariance_loss(const ToyModel& model, const Sample& sample, double rate, int trials,
                               std::uint64_t seed) {
  const std::span<const Sample> one(&sample, 1);
  return masking_invariance_loss(model, one, plan_masks(one, rate, trials, seed));
}

TrainOutcome train_clean(ToyModel model, std::span<const Sample> clean, const TrainOptions& options) {
  std::vector<const Sample*> pool;
  for (const auto& s : clean) pool.push_back(&s);
  std::vector<double> weights(pool.size(), 1.0);
  return run_supervised(std::move(model), std::move(pool), std::move(weights), Trainable{}, options, "clean training");
}

TrainOutcome train_backdoored(ToyModel model, std::span<const Sample> clean, std::span<const Sample> poisoned,
                              const AttackSpec& spec, const TrainOptions& options) {
  std::vector<const Sample*> pool;
  std::vector<double> weights;
  for (const auto& s : clean) {
    if (s.is_poisoned) throw ParameterError("clean set contains a poisoned sample");
    pool.push_back(&s);
    weights.push_back(1.0);
  }
  for (const auto& s : poisoned) {
    if (!s.is_poisoned) throw ParameterError("poisoned set contains a clean sample");
    pool.push_back(&s);
    weights.push_back(spec.poison_weight);
  }
  Trainable which;
  if (spec.kind == AttackKind::EP) {
    which.all_embeddings = false;
    which.embedding_rows = spec.triggers;
    which.prompt = which.head = which.bias = false;
  }
  return run_supervised(std::move(model), std::move(pool), std::move(weights), which, options, "backdoor training");
}

ToyModel prompt_tune(ToyModel model, std::span<const Sample> fewshot, double lmi_weight,
                     const PromptTuneOptions& options) {
  if (!options.prompt_trainable) return model;
  if (fewshot.empty()) throw InsufficientDataError("prompt tuning needs few-shot samples");
  if (!(lmi_weight >= 0.0)) throw ParameterError("L_MI weight must be non-negative");
  if (options.batch_size == 0 || options.epochs < 0 || !(options.learning_rate > 0.0)) {
    throw ParameterError("invalid prompt-tuning options");
  }

  Trainable which;
  which.all_embeddings = false;
  which.head = which.bias = false;
  Adam adam(model.params(), options.learning_rate);
  Rng rng = make_rng(options.seed, {0x70726f6d7074ULL});
  std::vector<std::size_t> order(fewshot.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(fewshot[order[i]]);
      Parameters grad = model.params().zeros_like();
      double loss = cross_entropy_loss(model, batch, &grad, 1.0);
      if (lmi_weight > 0.0) {
        const MaskPlan plan = plan_masks(batch, options.masking_rate, options.mask_trials, options.seed,
                                         static_cast<std::uint64_t>(epoch) + 1);
        loss += lmi_weight * masking_invariance_loss(model, batch, plan, &grad, lmi_weight);
      }
      check_finite(loss, "prompt tuning");
      adam.step(model.params(), grad, which, model.dim());
    }
  }
  return model;
}

AttackMetrics evaluate_attack(const ToyModel& model, std::span<const Sample> clean_test,
                              std::span<const Sample> poisoned_test, ClassId target) {
  if (clean_test.empty() || poisoned_test.empty()) {
    throw InsufficientDataError("evaluate_attack needs clean and poisoned test samples");
  }
  std::size_t correct = 0;
  for (const auto& s : clean_test) {
    if (oracle::predicted_class(model.distribution(s.tokens), model.labels()) == require_label(s)) ++correct;
  }
  std::size_t hits = 0;
  for (const auto& s : poisoned_test) {
    if (oracle::predicted_class(model.distribution(s.tokens), model.labels()) == target) ++hits;
  }
  return {100.0 * static_cast<double>(correct) / static_cast<double>(clean_test.size()),
          100.0 * static_cast<double>(hits) / static_cast<double>(poisoned_test.size())};
}

}  // namespace mdp::sim
