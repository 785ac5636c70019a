#include <gtest/gtest.h>

#include "morphloss/errors.hpp"
#include "morphloss/experiments.hpp"
#include "test_util.hpp"

using namespace morphloss;
using morphloss::testing::small_model;

namespace {

ExperimentConfig tiny_config() {
  const auto kv = KeyValueConfig::parse(R"(
seed = 5
[model]
points = 64
components = 8
subjects = 60
[data]
train = 24
val = 4
test = 4
landmarks = 16
[train]
epochs = 2
encoder_width = 16
head_hidden = 16
[search]
budget = 3
[output]
timing = off
)");
  return ExperimentConfig::from(kv);
}

const Workspace& tiny_workspace() {
  static const Workspace ws = make_workspace(tiny_config());
  return ws;
}

}  // namespace

TEST(ExperimentConfig, DefaultsAndOverrides) {
  const ExperimentConfig c = ExperimentConfig::from(KeyValueConfig{});
  EXPECT_EQ(c.losses.size(), 5u);
  EXPECT_EQ(c.budget, 20u);
  EXPECT_EQ(c.epochs_for(LossKind::Srl), 500u);
  EXPECT_EQ(c.epochs_for(LossKind::Gal), 120u);
  const auto kv = KeyValueConfig::parse("[train]\nepoch_scale = 0.1\n[compare]\nlosses = gal, srl\n");
  const ExperimentConfig d = ExperimentConfig::from(kv);
  EXPECT_EQ(d.epochs_for(LossKind::Srl), 50u);
  EXPECT_EQ(d.epochs_for(LossKind::Mrl), 12u);
  EXPECT_EQ(d.losses, (std::vector<LossKind>{LossKind::Gal, LossKind::Srl}));
}

TEST(ExperimentConfig, InvalidValuesAreConfigInvalid) {
  for (const char* text : {"bogus = 1\n", "[search]\nbudget = 0\n", "[sweep]\nviews = [4, 2]\n",
                           "[compare]\nlosses = gal, vgg\n", "[data]\ntrain = 0\nval = 0\ntest = 0\n"}) {
    try {
      ExperimentConfig::from(KeyValueConfig::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid) << text;
    }
  }
}

TEST(ExperimentConfig, HashChangesWithConfig) {
  const ExperimentConfig a = tiny_config();
  ExperimentConfig b = a;
  b.seed = 6;
  EXPECT_NE(hash_hex(a.to_json().dump()), hash_hex(b.to_json().dump()));
}

TEST(GradCheck, ZeroTrialsIsConfigInvalid) {
  GradCheckOptions opt;
  opt.trials = 0;
  try {
    run_grad_check(small_model(), Calibration{}, {LossKind::Gal}, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
}

TEST(GradCheck, CorruptedGradientIsReportedWithBlock) {
  GradCheckOptions opt;
  opt.trials = 5;
  opt.corrupt = [](LossKind, LossReport& r) { r.grad_t[1] += 0.5; };
  const auto results = run_grad_check(small_model(), Calibration{}, {LossKind::Gal, LossKind::Xqt}, opt);
  for (const auto& r : results) {
    EXPECT_FALSE(r.ok());
    ASSERT_EQ(r.failures.size(), 5u);
    EXPECT_EQ(r.failures.front().block, "t");
    EXPECT_EQ(r.failures.front().index, 1u);
  }
  const Json j = grad_check_json(results);
  EXPECT_FALSE(j.at("pass").get<bool>());
}

TEST(Compare, SingleHyperparameterFreeLoss) {
  ExperimentConfig c = tiny_config();
  c.losses = {LossKind::Gal};
  const CompareResult r = run_compare(tiny_workspace(), c);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].ok);
  EXPECT_EQ(r.rows[0].trainings, 1u);
  EXPECT_EQ(r.rows[0].epochs, 2u);
  const std::string csv = compare_csv(r, false);
  EXPECT_EQ(csv.rfind("loss,reprojection_px,shape3d_mm,translation_cm,rotation_deg,time_per_epoch_s,epochs,trainings,"
                      "total_time_s",
                      0),
            0u);
}

TEST(Compare, MultitermTrainingsEqualBudget) {
  ExperimentConfig c = tiny_config();
  c.losses = {LossKind::Coarse};
  const CompareResult r = run_compare(tiny_workspace(), c);
  ASSERT_TRUE(r.rows[0].ok) << r.rows[0].error;
  EXPECT_EQ(r.rows[0].trainings, 3u);
  ASSERT_EQ(r.searches.count(LossKind::Coarse), 1u);
  const std::string log = trial_log_jsonl(LossKind::Coarse, r.spaces.at(LossKind::Coarse),
                                          r.searches.at(LossKind::Coarse), false);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_NE(log.find("\"selection\""), std::string::npos);
}

TEST(Compare, DeterministicOutputs) {
  ExperimentConfig c = tiny_config();
  c.losses = {LossKind::Srl, LossKind::Xqt};
  const CompareResult a = run_compare(tiny_workspace(), c);
  const CompareResult b = run_compare(tiny_workspace(), c);
  EXPECT_EQ(compare_csv(a, false), compare_csv(b, false));
  EXPECT_EQ(compare_json(a, false).dump(), compare_json(b, false).dump());
}

TEST(Compare, FailingLossDoesNotStopOthers) {
  ExperimentConfig c = tiny_config();
  c.losses = {LossKind::Coarse, LossKind::Gal};
  Workspace ws = tiny_workspace();
  // Fewer than 20 training scenes leaves the coarse scales undefined.
  std::vector<Scene> kept;
  std::size_t train = 0;
  for (const auto& s : ws.scenes) {
    if (s.split != Split::Train || ++train <= 10) kept.push_back(s);
  }
  ws.scenes = kept;
  const CompareResult r = run_compare(ws, c);
  EXPECT_FALSE(r.rows[0].ok);
  EXPECT_TRUE(r.rows[1].ok);
  EXPECT_NE(compare_csv(r).find("failed"), std::string::npos);
}

TEST(Sweep, SingleViewCountGivesOneRow) {
  ExperimentConfig c = tiny_config();
  c.sweep_views = {1};
  const SweepResult r = run_sweep_views(tiny_workspace(), c);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.spread_mm, 0.0);
  EXPECT_TRUE(r.shape_stable());
}

TEST(Flattening, ReportsChecks) {
  const FlatteningResult r = run_flattening_demo(tiny_workspace(), tiny_config());
  EXPECT_EQ(r.checks.size(), 6u);
  const Json j = flattening_json(r, false);
  EXPECT_TRUE(j.contains("srl"));
  EXPECT_TRUE(j.at("mrl").contains("profile_depth_ratio"));
}
