#include "morphloss/hparam_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <string>

#include <omp.h>

#include "morphloss/errors.hpp"

namespace morphloss {

void SearchSpace::validate() const {
  if (budget < 1) throw Error(ErrorCode::ConfigInvalid, "search budget must be >= 1");
  for (const auto& [name, b] : params) {
    if (!(b.lower > 0) || !(b.upper > b.lower) || !std::isfinite(b.upper)) {
      throw Error(ErrorCode::ConfigInvalid, "bad bounds for '" + name + "': need 0 < lower < upper");
    }
  }
}

std::size_t SearchResult::successes() const {
  std::size_t n = 0;
  for (const auto& t : trials) n += t.ok() ? 1 : 0;
  return n;
}

TermMeans initial_term_means(const MorphableModel& model, const std::vector<Scene>& scenes) {
  Prediction init;
  init.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_components()));
  TermMeans sum;
  std::size_t n = 0;
  for (const auto& scene : scenes) {
    for (const auto& view : scene.views) {
      const GroundTruth gt{scene.gt_shape, view.pose};
      const double shape = xqt_loss(model, init, gt, {0, 0, 0}).value;
      sum.shape += shape;
      sum.coarse_pose += coarse_loss(model, init, gt, {1, 0, 0}).value - shape;
      sum.quaternion += xqt_loss(model, init, gt, {0, 1, 0}).value - shape;
      sum.translation += xqt_loss(model, init, gt, {0, 0, 1}).value - shape;
      ++n;
    }
  }
  if (n == 0) return sum;
  const double k = 1.0 / static_cast<double>(n);
  return {sum.shape * k, sum.coarse_pose * k, sum.quaternion * k, sum.translation * k};
}

TermScales scales_from_means(const TermMeans& m) {
  auto ratio = [&](double term, const char* name) {
    if (!(m.shape > 0) || !(term > 0) || !std::isfinite(m.shape) || !std::isfinite(term)) {
      throw Error(ErrorCode::ScaleUndefined, std::string("cannot scale the ") + name + " term: zero or non-finite mean");
    }
    return m.shape / term;
  };
  return {ratio(m.coarse_pose, "coarse pose"), ratio(m.quaternion, "quaternion"), ratio(m.translation, "translation")};
}

TermScales estimate_scales(const MorphableModel& model, const std::vector<Scene>& scenes) {
  if (scenes.size() < 20) throw Error(ErrorCode::ConfigInvalid, "scale estimation needs at least 20 scenes");
  return scales_from_means(initial_term_means(model, scenes));
}

SearchSpace multiterm_space(LossKind kind, const TermScales& scales, std::size_t budget) {
  auto around = [](double s) { return Bound{0.1 * s, 10.0 * s}; };
  SearchSpace space;
  space.budget = budget;
  switch (kind) {
    case LossKind::Coarse:
      space.params = {{"alpha_w", around(scales.alpha)}, {"lr", kLearningRateBound}};
      break;
    case LossKind::Xqt:
      space.params = {{"beta_w", around(scales.beta)}, {"gamma_w", around(scales.gamma)}, {"lr", kLearningRateBound}};
      break;
    default:
      throw Error(ErrorCode::ConfigInvalid, "only multiterm losses have a search space");
  }
  return space;
}

std::vector<HyperParams> sample_trials(const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<HyperParams> out(space.budget);
  for (auto& params : out) {
    for (const auto& [name, b] : space.params) {
      const double lo = std::log(b.lower), hi = std::log(b.upper);
      params[name] = std::clamp(std::exp(lo + unit(rng) * (hi - lo)), b.lower, b.upper);
    }
  }
  return out;
}

SearchResult random_search(const SearchSpace& space, const TrialFn& train_fn, std::uint64_t seed,
                           std::size_t workers, const std::function<void(const Trial&)>& on_trial) {
  const auto draws = sample_trials(space, seed);
  SearchResult result;
  result.trials.resize(draws.size());
  const int threads = static_cast<int>(std::max<std::size_t>(1, workers));
  const auto n = static_cast<std::ptrdiff_t>(draws.size());

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Trial& trial = result.trials[static_cast<std::size_t>(i)];
    trial.index = static_cast<std::size_t>(i);
    trial.params = draws[static_cast<std::size_t>(i)];
    const auto started = std::chrono::steady_clock::now();
    try {
      trial.metrics = train_fn(trial.params, trial.index);
      if (!std::isfinite(trial.metrics->shape3d_mm) || !std::isfinite(trial.metrics->reprojection_px)) {
        trial.metrics.reset();
        trial.error = "non-finite validation metrics";
      }
    } catch (const std::exception& e) {
      trial.metrics.reset();
      trial.error = e.what();
      if (trial.error.empty()) trial.error = "trial failed";
    }
    trial.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_trial) {
#pragma omp critical(morphloss_trial_log)
      on_trial(trial);
    }
  }

  double shape_sum = 0.0, repro_sum = 0.0;
  const std::size_t ok = result.successes();
  if (ok == 0) throw Error(ErrorCode::SearchFailed, "all " + std::to_string(draws.size()) + " trials failed");
  for (const auto& t : result.trials) {
    if (!t.ok()) continue;
    shape_sum += t.metrics->shape3d_mm;
    repro_sum += t.metrics->reprojection_px;
  }
  const double shape_mean = shape_sum / static_cast<double>(ok);
  const double repro_mean = repro_sum / static_cast<double>(ok);
  double best = std::numeric_limits<double>::infinity();
  for (auto& t : result.trials) {
    if (!t.ok()) {
      t.composite = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    t.composite = (shape_mean > 0 ? t.metrics->shape3d_mm / shape_mean : 0.0) +
                  (repro_mean > 0 ? t.metrics->reprojection_px / repro_mean : 0.0);
    if (t.composite < best) {
      best = t.composite;
      result.best = t.index;
    }
  }
  return result;
}

}  // namespace morphloss
