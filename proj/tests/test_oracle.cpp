#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "mdp/errors.hpp"
#include "mdp/masking.hpp"
#include "mdp/oracle.hpp"
#include "mdp/sim/toy_model.hpp"
#include "support.hpp"

using namespace mdp;
using oracle::Sample;
using oracle::VocabularyDescriptor;

TEST_CASE("class probability sums the class's label tokens") {
  const auto vocab = VocabularyDescriptor::contiguous(2, 2);
  const stats::LabelDistribution uniform = stats::LabelDistribution::uniform(4);
  CHECK(oracle::class_probability(uniform, 0, vocab) == 0.5);
  CHECK(oracle::class_probability(uniform, 1, vocab) == 0.5);

  const stats::LabelDistribution one_hot({0.0, 0.0, 1.0, 0.0});
  CHECK(oracle::class_probability(one_hot, 1, vocab) == 1.0);

  const stats::LabelDistribution d({0.7, 0.1, 0.15, 0.05});
  CHECK(oracle::class_probability(d, 0, vocab) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(oracle::predicted_class(d, vocab) == 0);
}

TEST_CASE("predicted class breaks ties toward the lowest class id") {
  const auto vocab = VocabularyDescriptor::contiguous(2, 1);
  CHECK(oracle::predicted_class(stats::LabelDistribution::uniform(2), vocab) == 0);
}

TEST_CASE("class probability rejects mismatched inputs") {
  const auto vocab = VocabularyDescriptor::contiguous(2, 2);
  CHECK_THROWS_AS((void)oracle::class_probability(stats::LabelDistribution::uniform(3), 0, vocab), DimensionError);
  CHECK_THROWS_AS((void)oracle::class_probability(stats::LabelDistribution::uniform(4), 2, vocab), ParameterError);
}

TEST_CASE("vocabulary descriptor validation") {
  CHECK_THROWS_AS(VocabularyDescriptor({"a", "a"}, {0, 1}), ParameterError);
  CHECK_THROWS_AS(VocabularyDescriptor({"a", "b"}, {0, 2}), ParameterError);
  CHECK_THROWS_AS(VocabularyDescriptor({"a"}, {0, 1}), ParameterError);
  const VocabularyDescriptor v({"great", "good", "terrible"}, {0, 0, 1});
  CHECK(v.num_classes() == 2);
  CHECK(v.tokens_of(0) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("sample validation") {
  CHECK_THROWS_AS(oracle::validate_sample(Sample{1, {}, {}, false}, false), ParameterError);
  CHECK_THROWS_AS(oracle::validate_sample(Sample{1, {3, 0, 4}, {}, false}, false), ParameterError);
  CHECK_NOTHROW(oracle::validate_sample(Sample{1, {3, 0, 4}, {}, false}, true));
  CHECK_THROWS_AS(oracle::validate_sample(Sample{1, std::vector<oracle::TokenId>(129, 3), {}, false}, false),
                  ParameterError);
}

TEST_CASE("an all-zero simulator answers uniformly") {
  const sim::ToyModel zero(50, 4, VocabularyDescriptor::contiguous(2, 2));
  const sim::SimulatorOracle oracle(zero);
  const auto d = oracle.query(Sample{1, {5, 6, 7}, {}, false});
  for (std::size_t v = 0; v < 4; ++v) CHECK(d[v] == 0.25);
}

TEST_CASE("the simulator is deterministic bit for bit") {
  const sim::SimulatorOracle oracle(testing::small_model(3));
  const Sample s{1, {30, 60, 90, 100}, {}, false};
  CHECK(oracle.query(s) == oracle.query(s));
  const auto batch = oracle.query_batch(std::vector<Sample>{s, s});
  CHECK(batch[0] == batch[1]);
  CHECK(batch[0] == oracle.query(s));
}

TEST_CASE("mask count rounds and stays within [1, n]") {
  CHECK(mask_count(10, 0.2) == 2);
  CHECK(mask_count(12, 0.2) == 2);
  CHECK(mask_count(13, 0.2) == 3);
  CHECK(mask_count(2, 0.2) == 1);
  CHECK(mask_count(5, 1.0) == 5);
  CHECK_THROWS_AS((void)mask_count(5, 0.0), ParameterError);
  CHECK_THROWS_AS((void)mask_count(0, 0.2), InsufficientDataError);
}

TEST_CASE("mask positions are distinct, sorted and cover every position over many draws") {
  Rng rng(1);
  std::set<std::size_t> hit;
  for (int trial = 0; trial < 200; ++trial) {
    const auto pos = draw_mask_positions(20, 0.2, rng);
    REQUIRE(pos.size() == 4);
    REQUIRE(std::is_sorted(pos.begin(), pos.end()));
    REQUIRE(std::adjacent_find(pos.begin(), pos.end()) == pos.end());
    hit.insert(pos.begin(), pos.end());
  }
  CHECK(hit.size() == 20);
}

TEST_CASE("apply_mask replaces exactly the given positions") {
  const Sample s{4, {5, 6, 7, 8}, 1, false};
  const auto m = apply_mask(s, {1, 3});
  CHECK(m.tokens == std::vector<oracle::TokenId>{5, oracle::kMaskToken, 7, oracle::kMaskToken});
  CHECK(m.id == s.id);
  CHECK(m.label == s.label);
  CHECK_THROWS_AS((void)apply_mask(s, {4}), ParameterError);
}
