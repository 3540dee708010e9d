#pragma once

// Statistics used by the detector, the baselines and the theorem checks.
// Everything here is pure and thread-safe.

#include <cstddef>
#include <span>
#include <vector>

namespace mdp::stats {

// Probabilities below this are clamped before taking logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

// Probability vector over the label-token vocabulary. Construction validates
// non-negativity and unit mass (within 1e-9).
class LabelDistribution {
 public:
  LabelDistribution() = default;
  explicit LabelDistribution(std::vector<double> probs);

  static LabelDistribution uniform(std::size_t size);
  // Divides by the total mass; rejects negative or all-zero input.
  static LabelDistribution normalized(std::vector<double> weights);

  [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;

 private:
  std::vector<double> probs_;
};

// Sum of p_i * ln(p_i / q_i) after clamping both sides to [kProbabilityFloor, 1].
[[nodiscard]] double kl_divergence(std::span<const double> p, std::span<const double> q);
[[nodiscard]] double kl_divergence(const LabelDistribution& p, const LabelDistribution& q);

// Kendall tau-b. O(n log n) (Knight's algorithm).
// Throws InsufficientDataError for n < 2 and UndefinedCorrelationError when
// either series is constant.
[[nodiscard]] double kendall_tau(std::span<const double> x, std::span<const double> y);

[[nodiscard]] double mean(std::span<const double> values);

// Population standard deviation (divisor N).
[[nodiscard]] double std_dev(std::span<const double> values);

[[nodiscard]] double median(std::span<const double> values);

// Mann-Whitney AUC with ties counted one half. Higher score = more suspicious,
// so 1.0 means every poisoned score beats every clean score.
[[nodiscard]] double roc_auc(std::span<const double> clean_scores,
                             std::span<const double> poisoned_scores);

// Smallest threshold such that at most ceil(allowance * N) values strictly
// exceed it (nearest rank on the sorted series).
[[nodiscard]] double upper_quantile(std::span<const double> values, double allowance);

// ceil(allowance * n), robust to representation error in the product.
[[nodiscard]] std::size_t allowed_exceedances(double allowance, std::size_t n);

}  // namespace mdp::stats
