#pragma once

// Reference implementations and fixtures shared by the unit tests and the
// acceptance binary. Everything here is written independently of the library
// code it checks: direct formulas, all-pairs loops, finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "mdp/oracle.hpp"
#include "mdp/random.hpp"
#include "mdp/sim/synthetic_task.hpp"
#include "mdp/sim/toy_model.hpp"

namespace mdp::testing {

// Kendall tau-b by enumerating every pair.
inline double brute_kendall(std::span<const double> x, std::span<const double> y) {
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tie_x;
      } else if (dy == 0) {
        ++tie_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n1 = static_cast<double>(concordant + discordant + tie_x);
  const double n2 = static_cast<double>(concordant + discordant + tie_y);
  return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

// Mann-Whitney AUC by counting every (clean, poisoned) pair.
inline double brute_auc(std::span<const double> clean, std::span<const double> poisoned) {
  double wins = 0.0;
  for (double c : clean) {
    for (double p : poisoned) wins += p > c ? 1.0 : (p == c ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(clean.size()) * static_cast<double>(poisoned.size()));
}

// Plain sum of p ln(p/q) with both sides floored at 1e-12.
inline double direct_kl(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = std::max(p[i], 1e-12);
    const double b = std::max(q[i], 1e-12);
    kl += a * std::log(a / b);
  }
  return kl;
}

inline double population_std(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) total += (x = u(rng));
  for (double& x : w) x /= total;
  return w;
}

// TF-IDF recomputed from its definition for one (document, token) pair.
inline double brute_tfidf(std::span<const oracle::Sample> corpus, std::size_t doc, oracle::TokenId token) {
  const auto& tokens = corpus[doc].tokens;
  const double tf = static_cast<double>(std::count(tokens.begin(), tokens.end(), token)) /
                    static_cast<double>(tokens.size());
  std::size_t df = 0;
  for (const auto& s : corpus) df += std::find(s.tokens.begin(), s.tokens.end(), token) != s.tokens.end();
  return tf * std::log(static_cast<double>(corpus.size()) / static_cast<double>(df));
}

// Returns a fixed distribution whatever the input.
class ConstantOracle final : public oracle::Oracle {
 public:
  ConstantOracle(std::vector<double> probs, oracle::VocabularyDescriptor vocab)
      : dist_(std::move(probs)), vocab_(std::move(vocab)) {}
  [[nodiscard]] stats::LabelDistribution query(const oracle::Sample&) const override { return dist_; }
  [[nodiscard]] const oracle::VocabularyDescriptor& vocabulary() const override { return vocab_; }

 private:
  stats::LabelDistribution dist_;
  oracle::VocabularyDescriptor vocab_;
};

// Always puts all mass on the first label token of one class.
inline ConstantOracle always_class(oracle::ClassId y, int num_classes = 2) {
  std::vector<double> p(static_cast<std::size_t>(num_classes), 0.0);
  p[static_cast<std::size_t>(y)] = 1.0;
  return ConstantOracle(std::move(p), oracle::VocabularyDescriptor::contiguous(num_classes, 1));
}

// A small randomly initialised model over the default token layout.
inline sim::ToyModel small_model(std::uint64_t seed, int dim = 4, int tokens_per_class = 1, double scale = 0.5) {
  const sim::VocabLayout layout;
  auto model = sim::ToyModel::random(layout.size(), dim, oracle::VocabularyDescriptor::contiguous(2, tokens_per_class),
                                     seed, scale);
  // A non-zero prompt exercises its gradient path too.
  Rng rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> n(0.0, scale);
  for (double& p : model.params().prompt) p = n(rng);
  return model;
}

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_diff = 0.0;
  std::size_t coordinates = 0;
};

// Central differences with step h over the listed flat coordinates.
// loss(model, grad) must accumulate d(loss)/d(params) into grad when grad is
// non-null.
inline GradCheck check_gradient(const sim::ToyModel& model,
                                const std::function<double(const sim::ToyModel&, sim::Parameters*)>& loss,
                                std::span<const std::size_t> coords, double h = 1e-5) {
  sim::Parameters analytic = model.params().zeros_like();
  loss(model, &analytic);
  sim::ToyModel probe = model;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
  for (std::size_t i : coords) {
    const double original = probe.params().flat(i);
    probe.params().flat(i) = original + h;
    const double up = loss(probe, nullptr);
    probe.params().flat(i) = original - h;
    const double down = loss(probe, nullptr);
    probe.params().flat(i) = original;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.flat(i);
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
    max_abs = std::max(max_abs, std::abs(a - numeric));
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  return {std::sqrt(diff2) / denom, max_abs, coords.size()};
}

// Every coordinate a batch can influence: the embedding rows of its tokens
// plus prompt, head and bias.
inline std::vector<std::size_t> touched_coordinates(const sim::ToyModel& model,
                                                    std::span<const oracle::Sample> samples) {
  const auto dim = static_cast<std::size_t>(model.dim());
  std::set<oracle::TokenId> rows;
  for (const auto& s : samples) {
    for (auto t : s.tokens) {
      if (t != oracle::kMaskToken) rows.insert(t);
    }
  }
  std::vector<std::size_t> coords;
  for (auto t : rows) {
    for (std::size_t d = 0; d < dim; ++d) coords.push_back(static_cast<std::size_t>(t) * dim + d);
  }
  const std::size_t base = model.params().embeddings.size();
  const std::size_t rest = model.params().prompt.size() + model.params().head.size() + model.params().bias.size();
  for (std::size_t i = 0; i < rest; ++i) coords.push_back(base + i);
  return coords;
}

}  // namespace mdp::testing
