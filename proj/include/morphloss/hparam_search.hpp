#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morphloss/losses.hpp"
#include "morphloss/morphable.hpp"
#include "morphloss/synthdata.hpp"

namespace morphloss {

struct Bound {
  double lower = 0.0;
  double upper = 0.0;
};

/// Named intervals sampled log-uniformly, plus the trial budget.
struct SearchSpace {
  std::vector<std::pair<std::string, Bound>> params;
  std::size_t budget = 20;

  /// Throws ConfigInvalid unless 0 < lower < upper for every entry and budget >= 1.
  void validate() const;
};

inline constexpr Bound kLearningRateBound{1e-5, 1e-3};

/// Ratio of the mean shape term to the mean of each pose term at the
/// initialized predictor: alpha for the coarse pose block, beta for the
/// quaternion term and gamma for the translation term of xqt.
struct TermScales {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

/// Mean term values of the initialized predictor.
struct TermMeans {
  double shape = 0.0;
  double coarse_pose = 0.0;
  double quaternion = 0.0;
  double translation = 0.0;
};

TermMeans initial_term_means(const MorphableModel& model, const std::vector<Scene>& scenes);

/// Throws ScaleUndefined if any mean is zero or not finite.
TermScales scales_from_means(const TermMeans& means);

/// Needs at least 20 scenes (ConfigInvalid otherwise).
TermScales estimate_scales(const MorphableModel& model, const std::vector<Scene>& scenes);

/// Weight bounds (0.1 s, 10 s) around each scale plus the lr interval.
/// Coarse searches alpha_w and lr; xqt searches beta_w, gamma_w and lr.
SearchSpace multiterm_space(LossKind kind, const TermScales& scales, std::size_t budget = 20);

using HyperParams = std::map<std::string, double>;

struct TrialMetrics {
  double shape3d_mm = 0.0;
  double reprojection_px = 0.0;
};

/// Trains and validates one configuration. Exceptions mark the trial failed.
using TrialFn = std::function<TrialMetrics(const HyperParams& params, std::size_t trial)>;

struct Trial {
  std::size_t index = 0;
  HyperParams params;  // includes "lr" when searched
  std::optional<TrialMetrics> metrics;
  /// Shape and reprojection, each divided by its mean over successful trials, summed.
  double composite = 0.0;
  double wall_time_s = 0.0;
  std::string error;  // empty on success

  bool ok() const { return metrics.has_value(); }
};

struct SearchResult {
  std::vector<Trial> trials;  // in trial order
  std::size_t best = 0;

  const Trial& best_trial() const { return trials.at(best); }
  std::size_t successes() const;
};

/// The budget's parameter draws, in trial order.
std::vector<HyperParams> sample_trials(const SearchSpace& space, std::uint64_t seed);

/// Runs every trial, up to `workers` at a time. `on_trial` sees each finished
/// trial (in completion order when workers > 1). Throws SearchFailed when
/// every trial failed.
SearchResult random_search(const SearchSpace& space, const TrialFn& train_fn, std::uint64_t seed,
                           std::size_t workers = 1, const std::function<void(const Trial&)>& on_trial = {});

}  // namespace morphloss
