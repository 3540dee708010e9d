#include "mdp/numstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>

#include "mdp/errors.hpp"

namespace mdp::stats {

namespace {

constexpr double kMassTolerance = 1e-9;

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0); }

std::int64_t tie_pairs(std::int64_t run) { return run * (run - 1) / 2; }

}  // namespace

LabelDistribution::LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ParameterError("label distribution must not be empty");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ParameterError("label distribution has a negative or non-finite entry");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw ParameterError("label distribution mass is " + std::to_string(total) + ", expected 1");
  }
}

LabelDistribution LabelDistribution::uniform(std::size_t size) {
  if (size == 0) throw ParameterError("uniform distribution needs at least one entry");
  return LabelDistribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

LabelDistribution LabelDistribution::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ParameterError("weights sum to zero");
  for (double& w : weights) w /= total;
  return LabelDistribution(std::move(weights));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_divergence: length " + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = clamp_probability(p[i]);
    const double qi = clamp_probability(q[i]);
    total += pi * std::log(pi / qi);
  }
  return total;
}

double kl_divergence(const LabelDistribution& p, const LabelDistribution& q) {
  return kl_divergence(p.probs(), q.probs());
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("kendall_tau: series lengths differ");
  const std::size_t n = x.size();
  if (n < 2) throw InsufficientDataError("kendall_tau needs at least two observations");

  std::vector<std::pair<double, double>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {x[i], y[i]};
  std::sort(pairs.begin(), pairs.end());

  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;

  // Ties in x, and joint ties in (x, y).
  std::int64_t x_ties = 0;
  std::int64_t joint_ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && pairs[j].first == pairs[i].first) ++j;
    x_ties += tie_pairs(static_cast<std::int64_t>(j - i));
    for (std::size_t k = i; k < j;) {
      std::size_t l = k + 1;
      while (l < j && pairs[l].second == pairs[k].second) ++l;
      joint_ties += tie_pairs(static_cast<std::int64_t>(l - k));
      k = l;
    }
    i = j;
  }

  // Bottom-up merge sort on y, counting strict inversions (discordant pairs).
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = pairs[i].second;
  std::vector<double> buffer(n);
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t a = lo;
      std::size_t b = mid;
      std::size_t out = lo;
      while (a < mid && b < hi) {
        if (ys[b] < ys[a]) {
          swaps += static_cast<std::int64_t>(mid - a);
          buffer[out++] = ys[b++];
        } else {
          buffer[out++] = ys[a++];
        }
      }
      while (a < mid) buffer[out++] = ys[a++];
      while (b < hi) buffer[out++] = ys[b++];
    }
    std::swap(ys, buffer);
  }

  std::int64_t y_ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && ys[j] == ys[i]) ++j;
    y_ties += tie_pairs(static_cast<std::int64_t>(j - i));
    i = j;
  }

  const std::int64_t x_untied = total - x_ties;
  const std::int64_t y_untied = total - y_ties;
  if (x_untied == 0 || y_untied == 0) {
    throw UndefinedCorrelationError("kendall_tau: a series is constant");
  }
  // concordant - discordant
  const std::int64_t numerator = total - x_ties - y_ties + joint_ties - 2 * swaps;
  const double denominator =
      std::sqrt(static_cast<double>(x_untied) * static_cast<double>(y_untied));
  return std::clamp(static_cast<double>(numerator) / denominator, -1.0, 1.0);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("mean of an empty series");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double std_dev(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("std_dev of an empty series");
  // Shifting by the first value keeps a constant series at exactly zero.
  const double shift = values.front();
  double m = 0.0;
  for (double v : values) m += v - shift;
  m /= static_cast<double>(values.size());
  double sum_sq = 0.0;
  for (double v : values) sum_sq += (v - shift - m) * (v - shift - m);
  return std::sqrt(sum_sq / static_cast<double>(values.size()));
}

double median(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("median of an empty series");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[mid];
  return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

double roc_auc(std::span<const double> clean_scores, std::span<const double> poisoned_scores) {
  if (clean_scores.empty() || poisoned_scores.empty()) {
    throw InsufficientDataError("roc_auc needs both clean and poisoned scores");
  }
  struct Entry {
    double score;
    bool poisoned;
  };
  std::vector<Entry> all;
  all.reserve(clean_scores.size() + poisoned_scores.size());
  for (double s : clean_scores) all.push_back({s, false});
  for (double s : poisoned_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Ranks are doubled so midranks stay integral.
  std::int64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i + 1;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const auto doubled_midrank = static_cast<std::int64_t>(i + 1 + j);  // (i+1) + j, ranks 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].poisoned) doubled_rank_sum += doubled_midrank;
    }
    i = j;
  }
  const auto n_p = static_cast<std::int64_t>(poisoned_scores.size());
  const auto n_c = static_cast<std::int64_t>(clean_scores.size());
  const std::int64_t doubled_u = doubled_rank_sum - n_p * (n_p + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * n_c * n_p);
}

std::size_t allowed_exceedances(double allowance, std::size_t n) {
  const double raw = allowance * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

double upper_quantile(std::span<const double> values, double allowance) {
  if (!(allowance > 0.0 && allowance < 1.0)) {
    throw ParameterError("allowance must lie in (0, 1)");
  }
  if (values.empty()) throw InsufficientDataError("upper_quantile of an empty series");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = allowed_exceedances(allowance, sorted.size());
  if (k >= sorted.size()) return sorted.front();
  return sorted[sorted.size() - 1 - k];
}

}  // namespace mdp::stats
