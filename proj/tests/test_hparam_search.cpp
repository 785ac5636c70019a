#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "morphloss/errors.hpp"
#include "morphloss/hparam_search.hpp"
#include "test_util.hpp"

using namespace morphloss;
using morphloss::testing::small_model;

namespace {

SearchSpace lr_space(std::size_t budget) {
  SearchSpace s;
  s.params = {{"lr", kLearningRateBound}};
  s.budget = budget;
  return s;
}

}  // namespace

TEST(Scales, EqualMeansGiveUnitScale) {
  const TermScales s = scales_from_means({2.0, 2.0, 2.0, 2.0});
  EXPECT_EQ(s.alpha, 1.0);
  const SearchSpace space = multiterm_space(LossKind::Coarse, s);
  ASSERT_EQ(space.params.size(), 2u);
  EXPECT_EQ(space.params[0].first, "alpha_w");
  EXPECT_NEAR(space.params[0].second.lower, 0.1, 1e-15);
  EXPECT_NEAR(space.params[0].second.upper, 10.0, 1e-15);
  EXPECT_EQ(space.params[1].first, "lr");
}

TEST(Scales, ShapeHundredPoseOne) {
  const TermScales s = scales_from_means({100.0, 1.0, 1.0, 1.0});
  const SearchSpace space = multiterm_space(LossKind::Xqt, s, 20);
  ASSERT_EQ(space.params.size(), 3u);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(space.params[static_cast<std::size_t>(k)].second.lower, 10.0, 1e-12);
    EXPECT_NEAR(space.params[static_cast<std::size_t>(k)].second.upper, 1000.0, 1e-12);
  }
}

TEST(Scales, ZeroMeanIsUndefined) {
  try {
    scales_from_means({1.0, 0.0, 1.0, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScaleUndefined);
  }
}

TEST(Scales, DeskDatasetGivesFinitePositiveScales) {
  DatasetConfig c;
  c.n_train = 25;
  c.n_val = 0;
  c.n_test = 0;
  c.n_landmarks = 16;
  const auto scenes = generate_dataset(small_model(), c, 3);
  const TermScales s = estimate_scales(small_model(), scenes);
  for (double v : {s.alpha, s.beta, s.gamma}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
  }
  const std::vector<Scene> few(scenes.begin(), scenes.begin() + 5);
  EXPECT_THROW(estimate_scales(small_model(), few), Error);
}

TEST(Scales, HyperparameterFreeLossHasNoSpace) {
  EXPECT_THROW(multiterm_space(LossKind::Gal, {}), Error);
}

TEST(SearchSpace, Validation) {
  SearchSpace s = lr_space(0);
  EXPECT_THROW(s.validate(), Error);
  s = lr_space(3);
  s.params[0].second = {1.0, 0.5};
  EXPECT_THROW(s.validate(), Error);
}

TEST(RandomSearch, BudgetOneReturnsSingleTrial) {
  const SearchResult r = random_search(
      lr_space(1), [](const HyperParams&, std::size_t) { return TrialMetrics{1.0, 1.0}; }, 5);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  EXPECT_TRUE(r.best_trial().ok());
}

TEST(RandomSearch, SamplesStayInBoundsAndAreDeterministic) {
  SearchSpace s;
  s.params = {{"a", {0.1, 10.0}}, {"lr", kLearningRateBound}};
  s.budget = 200;
  const auto a = sample_trials(s, 9);
  const auto b = sample_trials(s, 9);
  ASSERT_EQ(a.size(), 200u);
  EXPECT_EQ(a, b);
  int below_one = 0;
  for (const auto& p : a) {
    EXPECT_GE(p.at("a"), 0.1);
    EXPECT_LE(p.at("a"), 10.0);
    EXPECT_GE(p.at("lr"), 1e-5);
    EXPECT_LE(p.at("lr"), 1e-3);
    below_one += p.at("a") < 1.0;
  }
  // Log-uniform: half the mass below the geometric midpoint.
  EXPECT_GT(below_one, 70);
  EXPECT_LT(below_one, 130);
  EXPECT_NE(sample_trials(s, 10), a);
}

TEST(RandomSearch, PlantedOptimum) {
  const double optimum = 2e-4;
  auto fn = [&](const HyperParams& p, std::size_t) {
    const double d = std::abs(std::log(p.at("lr")) - std::log(optimum));
    return TrialMetrics{1.0 + d, 1.0 + d};
  };
  const SearchResult r = random_search(lr_space(20), fn, 4);
  std::size_t closest = 0;
  double best = 1e9;
  for (const auto& t : r.trials) {
    const double d = std::abs(std::log(t.params.at("lr")) - std::log(optimum));
    if (d < best) {
      best = d;
      closest = t.index;
    }
  }
  EXPECT_EQ(r.best, closest);
  EXPECT_EQ(r.successes(), 20u);
}

TEST(RandomSearch, CompositeNormalizesByMeans) {
  auto fn = [](const HyperParams&, std::size_t trial) {
    return trial == 0 ? TrialMetrics{1.0, 30.0} : TrialMetrics{3.0, 10.0};
  };
  const SearchResult r = random_search(lr_space(2), fn, 1);
  EXPECT_NEAR(r.trials[0].composite, 1.0 / 2.0 + 30.0 / 20.0, 1e-12);
  EXPECT_NEAR(r.trials[1].composite, 3.0 / 2.0 + 10.0 / 20.0, 1e-12);
}

TEST(RandomSearch, FailedTrialsAreRecordedAndSkipped) {
  auto fn = [](const HyperParams&, std::size_t trial) -> TrialMetrics {
    if (trial % 2 == 0) throw std::runtime_error("diverged");
    if (trial == 3) return {std::nan(""), 1.0};
    return {1.0, static_cast<double>(trial)};
  };
  const SearchResult r = random_search(lr_space(6), fn, 2);
  EXPECT_EQ(r.successes(), 2u);
  EXPECT_FALSE(r.trials[0].ok());
  EXPECT_NE(r.trials[0].error.find("diverged"), std::string::npos);
  EXPECT_FALSE(r.trials[3].ok());
  EXPECT_EQ(r.best, 1u);
}

TEST(RandomSearch, AllFailedThrows) {
  auto fn = [](const HyperParams&, std::size_t) -> TrialMetrics { throw std::runtime_error("x"); };
  try {
    random_search(lr_space(3), fn, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SearchFailed);
  }
}

TEST(RandomSearch, WorkersDoNotChangeResults) {
  auto fn = [](const HyperParams& p, std::size_t) { return TrialMetrics{p.at("lr") * 1e4, 1.0 / p.at("lr")}; };
  const SearchResult a = random_search(lr_space(8), fn, 3, 1);
  const SearchResult b = random_search(lr_space(8), fn, 3, 4);
  EXPECT_EQ(a.best, b.best);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.trials[i].composite, b.trials[i].composite);
}

TEST(RandomSearch, CallbackSeesEveryTrial) {
  std::size_t calls = 0;
  random_search(
      lr_space(5), [](const HyperParams&, std::size_t) { return TrialMetrics{1, 1}; }, 1, 1,
      [&](const Trial&) { ++calls; });
  EXPECT_EQ(calls, 5u);
}
