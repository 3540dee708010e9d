#include "mdp/theoremlab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mdp/errors.hpp"
#include "mdp/numstats.hpp"
#include "mdp/parallel.hpp"
#include "mdp/random.hpp"

namespace mdp::theorem {
namespace {

double clamp_probability(double p) {
  return std::clamp(p, stats::kProbabilityFloor, 1.0 - stats::kProbabilityFloor);
}

double log_in(double x, LogBase base) {
  return base == LogBase::Two ? std::log2(x) : std::log(x);
}

double root_factor(int n) { return static_cast<double>(n) / std::sqrt(static_cast<double>(n - 1)); }

// KL(Bernoulli(p) || Bernoulli(q)) through the generic discrete routine.
double bernoulli_kl(double p, double q, LogBase base) {
  const double pv[2] = {p, 1.0 - p};
  const double qv[2] = {q, 1.0 - q};
  const double nats = stats::kl_divergence(pv, qv);
  return base == LogBase::Two ? nats / std::numbers::ln2 : nats;
}

}  // namespace

void Scenario::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (n < 2) throw ParameterError("scenario needs n >= 2");
  if (!open_unit(kappa_plus) || !open_unit(kappa_minus) || !open_unit(p_star)) {
    throw ParameterError("kappa_plus, kappa_minus and p_star must lie in (0, 1)");
  }
  if (!(kappa_minus < 0.5 && 0.5 < kappa_plus)) {
    throw ParameterError("scenario needs kappa_minus < 0.5 < kappa_plus");
  }
  if (p_star >= kappa_minus && p_star <= kappa_plus) {
    throw ParameterError("anchor probability must lie outside [kappa_minus, kappa_plus]");
  }
  if (!(gamma >= 0.0)) throw ParameterError("gamma must be non-negative");
}

double h(double p, double p_star, LogBase base) {
  const double x = clamp_probability(p);
  const double a = clamp_probability(p_star);
  return x * log_in(x / a, base) + (1.0 - x) * log_in((1.0 - x) / (1.0 - a), base);
}

double sigma_bound(const Scenario& s, LogBase base) {
  s.validate();
  const double dh = std::abs(h(s.kappa_plus, s.p_star, base) - h(s.kappa_minus, s.p_star, base));
  return dh / root_factor(s.n);
}

double brute_force_sigma(const Scenario& s, LogBase base) {
  s.validate();
  const double unmasked = bernoulli_kl(s.kappa_plus, s.p_star, base);
  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(s.n));
  taus.push_back(bernoulli_kl(s.kappa_minus, s.p_star, base) - unmasked);
  for (int i = 1; i < s.n; ++i) taus.push_back(bernoulli_kl(s.kappa_plus, s.p_star, base) - unmasked);
  return stats::std_dev(taus);
}

EvasionCheck evasion_feasible(const Scenario& s) {
  s.validate();
  const double tolerance = root_factor(s.n) * s.gamma;
  const double dh = std::abs(h(s.kappa_plus, s.p_star, LogBase::Two) -
                             h(s.kappa_minus, s.p_star, LogBase::Two));
  EvasionCheck out;
  out.margin = tolerance - dh;
  out.feasible = dh <= tolerance;
  const double c = clamp_probability(s.p_star);
  out.corollary_margin =
      std::abs(h(s.kappa_minus, s.p_star, LogBase::Two) + 1.0 + 0.5 * std::log2(c * (1.0 - c))) - tolerance;
  out.corollary_holds = out.corollary_margin > 0.0;
  return out;
}

std::vector<double> feasible_kappa_plus(const Scenario& s) {
  std::vector<double> found;
  for (int k = 501; k <= 999; ++k) {
    Scenario t = s;
    t.kappa_plus = k / 1000.0;
    if (t.p_star >= t.kappa_minus && t.p_star <= t.kappa_plus) continue;
    if (evasion_feasible(t).feasible) found.push_back(t.kappa_plus);
  }
  return found;
}

IdentityReport verify_bound_identity(LogBase base) {
  IdentityReport report;
  for (int n = 2; n <= 64; ++n) {
    for (int kp = 11; kp <= 19; ++kp) {
      for (int km = 1; km <= 9; ++km) {
        for (double p_star : {0.96, 0.04}) {
          Scenario s;
          s.n = n;
          s.kappa_plus = kp * 0.05;
          s.kappa_minus = km * 0.05;
          s.p_star = p_star;
          const double bound = sigma_bound(s, base);
          const double brute = brute_force_sigma(s, base);
          report.max_abs_error = std::max(report.max_abs_error, std::abs(bound - brute));
          report.rows.push_back(s);
          report.bounds.push_back(bound);
          report.brute.push_back(brute);
        }
      }
    }
  }
  report.scenarios = report.rows.size();
  return report;
}

CorollaryReport verify_corollary(std::size_t count, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x636f72ULL});
  std::uniform_int_distribution<int> pick_n(2, 64);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Scenario> accepted;
  accepted.reserve(count);
  while (accepted.size() < count) {
    Scenario s;
    s.n = pick_n(rng);
    s.kappa_minus = 0.001 + 0.498 * unit(rng);
    // Anchor on either side: confidently negative below kappa_minus, or
    // confidently positive above one half.
    s.p_star = unit(rng) < 0.5 ? s.kappa_minus * (0.001 + 0.998 * unit(rng))
                                : 0.502 + 0.497 * unit(rng);
    s.kappa_plus = s.p_star > 0.5 ? 0.5 + (s.p_star - 0.5) * 0.5 : 0.75;
    s.gamma = 0.5 * unit(rng) * unit(rng);
    if (s.p_star >= s.kappa_minus && s.p_star <= s.kappa_plus) continue;
    if (evasion_feasible(s).corollary_holds) accepted.push_back(s);
  }
  std::vector<std::size_t> hits(accepted.size(), 0);
  std::vector<std::size_t> points(accepted.size(), 0);
  parallel_for(accepted.size(), [&](std::size_t i) {
    hits[i] = feasible_kappa_plus(accepted[i]).size();
    for (int k = 501; k <= 999; ++k) {
      const double kp = k / 1000.0;
      if (!(accepted[i].p_star >= accepted[i].kappa_minus && accepted[i].p_star <= kp)) ++points[i];
    }
  });
  CorollaryReport report;
  report.scenarios = accepted.size();
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    report.counterexamples += hits[i] > 0 ? 1 : 0;
    report.grid_points += points[i];
  }
  return report;
}

}  // namespace mdp::theorem
