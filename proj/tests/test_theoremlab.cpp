#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mdp/errors.hpp"
#include "mdp/random.hpp"
#include "mdp/theoremlab.hpp"
#include "support.hpp"

using namespace mdp;
using namespace mdp::theorem;
using doctest::Approx;

TEST_CASE("h is the Bernoulli divergence") {
  CHECK(h(0.5, 0.5) == 0.0);
  CHECK(h(0.9, 0.5) == Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-12));
  CHECK(h(0.9, 0.5) == Approx(0.3681).epsilon(1e-3));
  CHECK(h(0.9, 0.5, LogBase::Two) == Approx(h(0.9, 0.5) / std::log(2.0)).epsilon(1e-12));
  // Clamping keeps the endpoints finite.
  CHECK(std::isfinite(h(1.0, 0.5)));
  CHECK(std::isfinite(h(0.0, 0.5)));
}

TEST_CASE("h at one half has the closed form of the corollary constant") {
  for (double p : {0.01, 0.04, 0.2, 0.5, 0.73, 0.96, 0.999}) {
    CHECK(h(0.5, p, LogBase::Two) == Approx(-1.0 - 0.5 * std::log2(p * (1.0 - p))).epsilon(1e-12));
  }
}

TEST_CASE("h is non-negative with its minimum at p star") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int i = 0; i < 10000; ++i) {
    const double p = u(rng);
    const double q = u(rng);
    REQUIRE(h(p, q) >= 0.0);
    REQUIRE(h(q, q) <= 1e-12);
    // Independent check through the general KL helper.
    const std::vector<double> a{p, 1.0 - p};
    const std::vector<double> b{q, 1.0 - q};
    REQUIRE(h(p, q) == Approx(testing::direct_kl(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("the bound on small samples") {
  // Pick kappas so that |dh| is exactly one nat: h(k-) = 1 + h(k+).
  Scenario s;
  s.p_star = 0.95;
  s.kappa_plus = 0.9;
  const double target = 1.0 + h(0.9, 0.95);
  double lo = 0.001, hi = 0.499;  // h(., 0.95) decreases on this interval
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (h(mid, 0.95) > target ? lo : hi) = mid;
  }
  s.kappa_minus = 0.5 * (lo + hi);
  REQUIRE(std::abs(h(s.kappa_plus, s.p_star) - h(s.kappa_minus, s.p_star)) == Approx(1.0).epsilon(1e-12));
  s.n = 2;
  CHECK(sigma_bound(s) == Approx(0.5).epsilon(1e-12));
  s.n = 4;
  CHECK(sigma_bound(s) == Approx(std::sqrt(3.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("the divergence gap only closes when p star sits between the kappas") {
  // h is monotone on each side of p star, so a valid scenario always has a gap.
  Scenario s;
  s.n = 8;
  for (double ps : {0.04, 0.96}) {
    s.p_star = ps;
    for (double km : {0.05, 0.2, 0.45}) {
      s.kappa_minus = km;
      for (int i = 501; i <= 950; i += 7) {
        s.kappa_plus = i / 1000.0;
        REQUIRE(sigma_bound(s) > 0.0);
      }
    }
  }
  // The zero-gap configuration needs p* inside [k-, k+] and is rejected.
  s.p_star = 0.5;
  s.kappa_plus = 0.7;
  s.kappa_minus = 0.3;
  CHECK(std::abs(h(0.7, 0.5) - h(0.3, 0.5)) <= 1e-15);
  CHECK_THROWS_AS((void)sigma_bound(s), ParameterError);
}

TEST_CASE("brute force matches the closed-form bound") {
  Scenario s;
  s.n = 2;
  s.kappa_plus = 0.9;
  s.kappa_minus = 0.1;
  s.p_star = 0.95;
  CHECK(brute_force_sigma(s) == Approx(std::abs(h(0.9, 0.95) - h(0.1, 0.95)) / 2.0).epsilon(1e-12));
  CHECK(std::abs(brute_force_sigma(s) - sigma_bound(s)) <= 1e-9);

  const auto report = verify_bound_identity();
  CHECK(report.scenarios > 10000);
  CHECK(report.max_abs_error <= 1e-9);
  const auto report2 = verify_bound_identity(LogBase::Two);
  CHECK(report2.max_abs_error <= 1e-9);
}

TEST_CASE("scenario validation") {
  Scenario s;
  CHECK_NOTHROW(s.validate());
  s.n = 1;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = Scenario{};
  s.p_star = 0.5;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = Scenario{};
  s.kappa_plus = 0.4;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = Scenario{};
  s.gamma = -1.0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("evasion feasibility at the extremes") {
  Scenario s;
  s.gamma = 0.0;
  const auto none = evasion_feasible(s);
  CHECK_FALSE(none.feasible);
  CHECK(none.margin < 0.0);
  CHECK(feasible_kappa_plus(s).empty());

  s.gamma = 1e6;
  CHECK(evasion_feasible(s).feasible);
  CHECK_FALSE(feasible_kappa_plus(s).empty());
}

TEST_CASE("divergence gap grows with attack strength below p star") {
  for (double km : {0.05, 0.2, 0.45}) {
    double previous = -1.0;
    for (int i = 501; i < 950; ++i) {
      const double kp = i / 1000.0;
      const double gap = std::abs(h(kp, 0.96) - h(km, 0.96));
      REQUIRE(gap > previous);
      previous = gap;
    }
  }
}

TEST_CASE("no effective attack evades when the corollary condition holds") {
  const auto r = verify_corollary(2000, 3);
  CHECK(r.scenarios == 2000);
  CHECK(r.counterexamples == 0);
  CHECK(r.grid_points > 0);
}
