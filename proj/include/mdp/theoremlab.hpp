#pragma once

// Numeric checks of the trade-off between attack effectiveness and detection
// evasiveness for a single anchor and a single trigger token.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mdp::theorem {

enum class LogBase { Natural, Two };

struct Scenario {
  int n = 2;                  // tokens in the poisoned sample, trigger included
  double kappa_plus = 0.9;    // target probability with the trigger intact
  double kappa_minus = 0.1;   // target probability with the trigger masked
  double p_star = 0.95;       // anchor's positive-token probability
  double gamma = 0.0;         // detection threshold

  // Throws ParameterError unless n >= 2, kappa_minus < 0.5 < kappa_plus,
  // both kappas and p_star lie in (0, 1), p_star is outside
  // [kappa_minus, kappa_plus] and gamma >= 0.
  void validate() const;
};

// Bernoulli KL divergence from p to p_star. Both arguments are clamped to
// [1e-12, 1 - 1e-12] first.
[[nodiscard]] double h(double p, double p_star, LogBase base = LogBase::Natural);

// sqrt(n - 1) / n * |h(kappa_plus) - h(kappa_minus)|.
[[nodiscard]] double sigma_bound(const Scenario& s, LogBase base = LogBase::Natural);

// Builds the n single-token-masked variants explicitly (one at kappa_minus,
// the rest at kappa_plus), takes tau = KL(masked || anchor) - KL(unmasked ||
// anchor) for each and returns the population std. Independent of h().
[[nodiscard]] double brute_force_sigma(const Scenario& s, LogBase base = LogBase::Natural);

struct EvasionCheck {
  bool feasible = false;          // |dh| <= n / sqrt(n - 1) * gamma
  double margin = 0.0;            // n / sqrt(n - 1) * gamma - |dh|
  bool corollary_holds = false;   // no kappa_plus > 1/2 can evade
  double corollary_margin = 0.0;  // |h(kappa_minus) + 1 + log2(p*(1-p*))/2| - n / sqrt(n - 1) * gamma
};

// Always evaluated in base 2, where the corollary's constant is exact.
[[nodiscard]] EvasionCheck evasion_feasible(const Scenario& s);

// Grid over kappa_plus in {0.501, 0.502, ..., 0.999}, keeping only values for
// which the scenario stays valid. Returns the feasible kappa_plus values found.
[[nodiscard]] std::vector<double> feasible_kappa_plus(const Scenario& s);

struct IdentityReport {
  std::size_t scenarios = 0;
  double max_abs_error = 0.0;
  std::vector<Scenario> rows;
  std::vector<double> bounds;
  std::vector<double> brute;
};

// n in 2..64, kappa_plus in 0.55..0.95, kappa_minus in 0.05..0.45 (steps of
// 0.05), p_star in {0.96, 0.04}.
[[nodiscard]] IdentityReport verify_bound_identity(LogBase base = LogBase::Natural);

struct CorollaryReport {
  std::size_t scenarios = 0;
  std::size_t counterexamples = 0;
  std::size_t grid_points = 0;
};

// Draws random scenarios until `count` of them satisfy the corollary
// condition, then grid-searches kappa_plus for each.
[[nodiscard]] CorollaryReport verify_corollary(std::size_t count, std::uint64_t seed);

}  // namespace mdp::theorem
