#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "morphloss/config.hpp"
#include "morphloss/evaluation.hpp"
#include "morphloss/hparam_search.hpp"
#include "morphloss/io.hpp"
#include "morphloss/training.hpp"

namespace morphloss {

/// Everything a harness command needs, read from a KeyValueConfig.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  std::string model_path;  // empty: build the synthetic model
  std::size_t model_points = 512;
  std::size_t model_components = 20;
  std::size_t model_subjects = 300;
  std::uint64_t model_seed = 42;

  std::string data_path;  // empty: generate from `seed`
  DatasetConfig data;

  TrainConfig train;         // loss and epochs are set per run
  std::size_t epochs = 0;    // 0: per-loss default
  double epoch_scale = 1.0;  // multiplies the per-loss default

  std::vector<LossKind> losses{std::begin(kAllLosses), std::end(kAllLosses)};
  std::size_t budget = 20;
  std::size_t workers = 1;

  std::vector<std::size_t> sweep_views{2, 4, 8};
  double sweep_max_spread = 0.15;  // fraction of the first row's shape3d

  std::size_t grad_trials = 50;

  double profile_min_yaw = 60.0;
  double srl_max_ratio = 0.5;
  double mrl_min_ratio = 0.7;
  double mrl_max_ratio = 1.3;
  double shape_factor = 2.0;  // SRL shape3d must reach this multiple of MRL's

  /// Wall-clock fields are written as 0 when false, making reports byte-stable.
  bool timing = true;

  /// Throws ConfigInvalid on bad or unknown keys.
  static ExperimentConfig from(const KeyValueConfig& kv);
  void validate() const;
  std::size_t epochs_for(LossKind loss) const;
  TrainConfig train_config(LossKind loss, std::uint64_t seed) const;
  /// Network seed shared by the single-training runs.
  std::uint64_t training_seed() const;
  Json to_json() const;
};

struct Workspace {
  MorphableModel model;
  Calibration K;
  std::vector<Scene> scenes;
};

MorphableModel load_or_build_model(const ExperimentConfig& config);
/// Model plus the dataset (loaded from data_path or generated from the seed).
Workspace make_workspace(const ExperimentConfig& config);

using Logger = std::function<void(const std::string&)>;

struct CompareRow {
  LossKind loss = LossKind::Gal;
  bool ok = false;
  std::string error;
  double reprojection_px = 0.0;
  double shape3d_mm = 0.0;
  double translation_cm = 0.0;
  double rotation_deg = 0.0;
  double time_per_epoch_s = 0.0;
  std::size_t epochs = 0;
  std::size_t trainings = 0;
  double total_time_s = 0.0;
  Json detail;  // selected hyperparameters, scales
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::map<LossKind, SearchResult> searches;
  std::map<LossKind, SearchSpace> spaces;

  const CompareRow* row(LossKind loss) const;
};

/// Trains every configured loss (multiterm ones through random search over
/// the scaled bounds, hyperparameter-free ones once) and evaluates on the test
/// split. A failing loss is recorded in its row; the others still run.
CompareResult run_compare(const Workspace& ws, const ExperimentConfig& config, const Logger& log = {});

std::string compare_csv(const CompareResult& result, bool timing = true);
Json compare_json(const CompareResult& result, bool timing = true);

/// Header line documenting the selection rule, then one line per trial.
std::string trial_log_jsonl(LossKind loss, const SearchSpace& space, const SearchResult& search, bool timing = true);

struct SweepRow {
  std::size_t views = 0;
  double shape3d_mm = 0.0;
  double reprojection_px = 0.0;
  double time_per_epoch_s = 0.0;
  double total_time_s = 0.0;
  std::size_t epochs = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double spread_mm = 0.0;        // max - min shape3d
  double spread_limit_mm = 0.0;  // max_spread * first row's shape3d
  bool time_increasing = false;

  bool shape_stable() const { return spread_mm <= spread_limit_mm; }
  bool ok() const { return shape_stable() && time_increasing; }
};

/// MRL trained once per view count with a common seed.
SweepResult run_sweep_views(const Workspace& ws, const ExperimentConfig& config, const Logger& log = {});
std::string sweep_csv(const SweepResult& result, bool timing = true);
Json sweep_json(const SweepResult& result, bool timing = true);

struct FlatteningSide {
  MetricReport test;
  double profile_ratio = 0.0;
  std::size_t profile_samples = 0;
  double total_time_s = 0.0;
};

struct FlatteningResult {
  FlatteningSide srl;
  FlatteningSide mrl;
  std::vector<std::pair<std::string, bool>> checks;

  bool ok() const;
};

/// SRL and MRL trained on the same dataset; flattening statistics on profile views.
FlatteningResult run_flattening_demo(const Workspace& ws, const ExperimentConfig& config, const Logger& log = {});
Json flattening_json(const FlatteningResult& result, bool timing = true);

struct GradCheckOptions {
  std::size_t trials = 50;
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;
  std::size_t views = 3;
  /// Instances with an l1 residual this close to zero, or whose residual signs
  /// change under the finite-difference steps, are redrawn.
  double kink_margin = 1e-7;
  std::size_t max_redraws = 10000;
  std::uint64_t seed = 0;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(LossKind, LossReport&)> corrupt;
};

struct GradCheckFailure {
  std::size_t trial = 0;
  std::string block;  // alpha, q_raw or t
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckLossResult {
  LossKind loss = LossKind::Gal;
  std::size_t trials = 0;
  std::size_t passed = 0;
  std::size_t redrawn = 0;
  /// Largest |a - n| / max(abs_tol, rel_tol max(|a|, |n|)); passing needs <= 1.
  double worst_ratio = 0.0;
  std::vector<GradCheckFailure> failures;  // first failing entry of each failed trial

  bool ok() const { return passed == trials && failures.empty(); }
};

/// Central finite differences against the analytic gradients of each loss on
/// random instances. Throws ConfigInvalid for zero trials.
std::vector<GradCheckLossResult> run_grad_check(const MorphableModel& model, const Calibration& K,
                                                const std::vector<LossKind>& losses, const GradCheckOptions& options);
Json grad_check_json(const std::vector<GradCheckLossResult>& results);

}  // namespace morphloss
