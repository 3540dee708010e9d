#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdp/sim/attacks.hpp"
#include "mdp/sim/toy_model.hpp"

namespace mdp::sim {

// ---- objectives -----------------------------------------------------------
// Each returns the loss value and, when grad is non-null, accumulates
// weight * d(loss)/d(params) into it.

// Mean class-level cross-entropy, -log sum_{v in V_y} p(v | x).
double cross_entropy_loss(const ToyModel& model, std::span<const Sample> samples,
                          Parameters* grad = nullptr, double weight = 1.0);

// Masks fixed in advance: plan[i][j] are the masked positions of trial j on
// sample i. Fixing them makes the loss a deterministic function of params.
using MaskPlan = std::vector<std::vector<std::vector<std::size_t>>>;

[[nodiscard]] MaskPlan plan_masks(std::span<const Sample> samples, double rate, int trials,
                                  std::uint64_t seed, std::uint64_t round = 0);

// Mean over samples and trials of KL(dist(masked) || dist(unmasked)), using
// exact log-softmax values.
double masking_invariance_loss(const ToyModel& model, std::span<const Sample> samples,
                               const MaskPlan& plan, Parameters* grad = nullptr, double weight = 1.0);

// Single-sample form with masks drawn from seed.
[[nodiscard]] double masking_invariance_loss(const ToyModel& model, const Sample& sample, double rate,
                                             int trials, std::uint64_t seed);

// ---- optimisation ---------------------------------------------------------

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  double weight_decay = 0.0;  // decoupled (AdamW-style)
  std::uint64_t seed = 0;
};

struct TrainOutcome {
  ToyModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  [[nodiscard]] bool improved() const noexcept { return final_loss < initial_loss; }
};

// Plain supervised fine-tuning on clean data (the benign starting model).
[[nodiscard]] TrainOutcome train_clean(ToyModel model, std::span<const Sample> clean,
                                       const TrainOptions& options);

// Minimises CE(clean) + lambda * CE(poisoned) with mini-batch Adam. For EP only
// the trigger embedding rows move. Throws DivergenceError on a non-finite loss.
[[nodiscard]] TrainOutcome train_backdoored(ToyModel model, std::span<const Sample> clean,
                                            std::span<const Sample> poisoned, const AttackSpec& spec,
                                            const TrainOptions& options);

struct PromptTuneOptions {
  int epochs = 20;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  double masking_rate = 0.2;
  int mask_trials = 8;
  bool prompt_trainable = true;
  std::uint64_t seed = 0;
};

// Trains only the prompt vector on task CE + lmi_weight * L_MI. Returns the
// model unchanged when prompt_trainable is off.
[[nodiscard]] ToyModel prompt_tune(ToyModel model, std::span<const Sample> fewshot, double lmi_weight,
                                   const PromptTuneOptions& options);

struct AttackMetrics {
  double clean_accuracy = 0.0;       // percent
  double attack_success_rate = 0.0;  // percent
};

[[nodiscard]] AttackMetrics evaluate_attack(const ToyModel& model, std::span<const Sample> clean_test,
                                            std::span<const Sample> poisoned_test, ClassId target);

}  // namespace mdp::sim
