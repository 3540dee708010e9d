#pragma once

// Mean-of-embeddings masked classifier used as the synthetic victim.
//
//   rep    = mean(embedding[t] for unmasked t) + prompt
//   logits = head * rep + bias          (one logit per label token)
//   dist   = softmax(logits)
//
// A masked position contributes nothing to the mean. A fully masked sample
// has rep = prompt.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mdp/numstats.hpp"
#include "mdp/oracle.hpp"

namespace mdp::sim {

// All trainable state, also used as the gradient container.
struct Parameters {
  std::vector<double> embeddings;  // vocab_size x dim, row-major
  std::vector<double> prompt;      // dim
  std::vector<double> head;        // labels x dim, row-major
  std::vector<double> bias;        // labels

  [[nodiscard]] Parameters zeros_like() const;
  void add_scaled(const Parameters& other, double scale);
  [[nodiscard]] std::size_t flat_size() const noexcept;
  [[nodiscard]] double& flat(std::size_t i);
  [[nodiscard]] double flat(std::size_t i) const;

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

struct ForwardPass {
  std::vector<double> rep;
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> log_probs;
  std::size_t present = 0;  // unmasked token count
};

class ToyModel {
 public:
  ToyModel() = default;
  // Zero-initialised parameters.
  ToyModel(int vocab_size, int dim, oracle::VocabularyDescriptor labels);

  // Gaussian init with the given standard deviation; prompt starts at zero.
  static ToyModel random(int vocab_size, int dim, oracle::VocabularyDescriptor labels,
                         std::uint64_t seed, double scale = 0.1);

  [[nodiscard]] int vocab_size() const noexcept { return vocab_size_; }
  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t num_labels() const noexcept { return labels_.size(); }
  [[nodiscard]] const oracle::VocabularyDescriptor& labels() const noexcept { return labels_; }

  [[nodiscard]] Parameters& params() noexcept { return params_; }
  [[nodiscard]] const Parameters& params() const noexcept { return params_; }

  [[nodiscard]] ForwardPass forward(std::span<const oracle::TokenId> tokens) const;
  [[nodiscard]] stats::LabelDistribution distribution(std::span<const oracle::TokenId> tokens) const;

  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
  void backward(std::span<const oracle::TokenId> tokens, const ForwardPass& pass,
                std::span<const double> dlogits, Parameters& grad) const;

  friend bool operator==(const ToyModel&, const ToyModel&) = default;

 private:
  int vocab_size_ = 0;
  int dim_ = 0;
  oracle::VocabularyDescriptor labels_;
  Parameters params_;
};

// Oracle backed by an immutable trained model.
class SimulatorOracle final : public oracle::Oracle {
 public:
  explicit SimulatorOracle(ToyModel model) : model_(std::move(model)) {}

  [[nodiscard]] stats::LabelDistribution query(const oracle::Sample& sample) const override;
  [[nodiscard]] const oracle::VocabularyDescriptor& vocabulary() const override {
    return model_.labels();
  }
  [[nodiscard]] const ToyModel& model() const noexcept { return model_; }

 private:
  ToyModel model_;
};

}  // namespace mdp::sim
