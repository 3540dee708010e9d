#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "mdp/errors.hpp"
#include "mdp/numstats.hpp"
#include "mdp/random.hpp"
#include "support.hpp"

using namespace mdp;
using doctest::Approx;

TEST_CASE("kl of identical distributions is zero") {
  const std::vector<double> p{0.5, 0.5};
  CHECK(stats::kl_divergence(p, p) == 0.0);
}

TEST_CASE("kl of a point mass against uniform is ln 2") {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.5, 0.5};
  // The floored zero adds 1e-12 * ln(1e-12 / 0.5), far below any tolerance of interest.
  const double expected = std::log(2.0) + 1e-12 * std::log(1e-12 / 0.5);
  CHECK(stats::kl_divergence(p, q) == Approx(expected).epsilon(1e-12));
  CHECK(stats::kl_divergence(p, q) == Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("kl against a disjoint point mass is bounded by the floor") {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.0, 1.0};
  // 1 * ln(1 / 1e-12) plus a vanishing 1e-12 * ln(1e-12) term.
  const double expected = std::log(1e12) + 1e-12 * std::log(1e-12);
  CHECK(stats::kl_divergence(p, q) == Approx(expected).epsilon(1e-12));
  CHECK(stats::kl_divergence(p, q) == Approx(27.631).epsilon(1e-4));
}

TEST_CASE("kl matches the direct sum and is never negative") {
  Rng rng(11);
  std::uniform_int_distribution<int> len(2, 8);
  for (int i = 0; i < 10000; ++i) {
    const auto n = static_cast<std::size_t>(len(rng));
    const auto p = testing::random_distribution(rng, n);
    const auto q = testing::random_distribution(rng, n);
    const double kl = stats::kl_divergence(p, q);
    REQUIRE(kl >= -1e-15);
    REQUIRE(kl == Approx(testing::direct_kl(p, q)).epsilon(1e-12));
  }
}

TEST_CASE("kl rejects mismatched lengths") {
  const std::vector<double> p{1.0};
  const std::vector<double> q{0.5, 0.5};
  CHECK_THROWS_AS((void)stats::kl_divergence(p, q), DimensionError);
}

TEST_CASE("label distributions validate their mass") {
  CHECK_NOTHROW(stats::LabelDistribution({0.25, 0.75}));
  CHECK_THROWS_AS(stats::LabelDistribution({0.5, 0.6}), ParameterError);
  CHECK_THROWS_AS(stats::LabelDistribution({-0.1, 1.1}), ParameterError);
  CHECK_THROWS_AS(stats::LabelDistribution(std::vector<double>{}), ParameterError);
  CHECK(stats::LabelDistribution::normalized({1.0, 3.0})[1] == 0.75);
  CHECK(stats::LabelDistribution::uniform(4)[2] == 0.25);
}

TEST_CASE("kendall tau on small series") {
  const std::vector<double> x{1, 2, 3};
  CHECK(stats::kendall_tau(x, std::vector<double>{10, 20, 30}) == 1.0);
  CHECK(stats::kendall_tau(x, std::vector<double>{3, 2, 1}) == -1.0);
  // 5 concordant and 1 discordant pair out of 6.
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{1, 3, 2, 4};
  CHECK(stats::kendall_tau(a, b) == Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("kendall tau equals the all-pairs count on random series") {
  Rng rng(5);
  std::uniform_int_distribution<int> len(2, 50);
  std::uniform_int_distribution<int> level(0, 6);  // few levels, so plenty of ties
  int checked = 0;
  while (checked < 1000) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = level(rng);
    for (auto& v : y) v = level(rng);
    const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (constant) {
      CHECK_THROWS_AS((void)stats::kendall_tau(x, y), UndefinedCorrelationError);
      continue;
    }
    REQUIRE(stats::kendall_tau(x, y) == testing::brute_kendall(x, y));
    ++checked;
  }
}

TEST_CASE("kendall tau input errors") {
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS((void)stats::kendall_tau(one, one), InsufficientDataError);
  const std::vector<double> two{1.0, 2.0};
  const std::vector<double> three{1.0, 2.0, 3.0};
  CHECK_THROWS_AS((void)stats::kendall_tau(two, three), DimensionError);
}

TEST_CASE("population standard deviation") {
  CHECK(stats::std_dev(std::vector<double>{5, 5, 5}) == 0.0);
  CHECK(stats::std_dev(std::vector<double>(50, 0.8)) == 0.0);  // no rounding residue
  CHECK(stats::std_dev(std::vector<double>{0, 2}) == 1.0);
  // One value at h(kappa-) and three at h(kappa+), one apart.
  CHECK(stats::std_dev(std::vector<double>{0, 1, 1, 1}) == Approx(std::sqrt(3.0) / 4.0).epsilon(1e-15));
  CHECK(stats::std_dev(std::vector<double>{0.9, 0.7}) == Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS((void)stats::std_dev(std::vector<double>{}), InsufficientDataError);
}

TEST_CASE("median") {
  CHECK(stats::median(std::vector<double>{3, 1, 2}) == 2.0);
  CHECK(stats::median(std::vector<double>{4, 1, 3, 2}) == 2.5);
}

TEST_CASE("roc auc on small sets") {
  CHECK(stats::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9}) == 1.0);
  CHECK(stats::roc_auc(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.5);
  CHECK(stats::roc_auc(std::vector<double>{0.1, 0.6}, std::vector<double>{0.4, 0.9}) == 0.75);
  CHECK_THROWS_AS((void)stats::roc_auc(std::vector<double>{}, std::vector<double>{1.0}), InsufficientDataError);
}

TEST_CASE("roc auc equals pair counting on random scores with ties") {
  Rng rng(9);
  std::uniform_int_distribution<int> len(1, 60);
  std::uniform_int_distribution<int> level(0, 9);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> c(static_cast<std::size_t>(len(rng))), p(static_cast<std::size_t>(len(rng)));
    for (auto& v : c) v = level(rng) * 0.1;
    for (auto& v : p) v = level(rng) * 0.1;
    REQUIRE(stats::roc_auc(c, p) == testing::brute_auc(c, p));
  }
}

TEST_CASE("upper quantile by nearest rank") {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  CHECK(stats::upper_quantile(s, 0.05) == 95.0);
  CHECK(stats::upper_quantile(std::vector<double>{7}, 0.05) == 7.0);
  CHECK(stats::upper_quantile(std::vector<double>{3, 3, 3, 3}, 0.5) == 3.0);
  CHECK_THROWS_AS((void)stats::upper_quantile(s, 0.0), ParameterError);
  CHECK_THROWS_AS((void)stats::upper_quantile(std::vector<double>{}, 0.05), InsufficientDataError);
}

TEST_CASE("upper quantile never lets more than ceil(a n) values through") {
  CHECK(stats::allowed_exceedances(0.05, 32) == 2);
  CHECK(stats::allowed_exceedances(0.05, 100) == 5);
  CHECK(stats::allowed_exceedances(0.03, 100) == 3);
  Rng rng(3);
  std::normal_distribution<double> nd;
  for (double a : {0.005, 0.01, 0.03, 0.05, 0.2}) {
    for (std::size_t n : {1u, 2u, 10u, 32u, 33u, 200u}) {
      std::vector<double> s(n);
      for (auto& v : s) v = nd(rng);
      const double g = stats::upper_quantile(s, a);
      const auto above = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v > g; }));
      CHECK(above <= static_cast<std::size_t>(std::ceil(a * static_cast<double>(n))));
    }
  }
}
