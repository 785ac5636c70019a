#include "morphloss/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "morphloss/batch.hpp"
#include "morphloss/errors.hpp"

namespace morphloss {

void TrainConfig::validate() const {
  weights.validate();
  if (loss == LossKind::Mrl && views < 1) throw Error(ErrorCode::ConfigInvalid, "MRL needs at least one view");
  if (batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw Error(ErrorCode::ConfigInvalid, "learning rate must be positive");
  if (!(clip_norm > 0)) throw Error(ErrorCode::ConfigInvalid, "clip norm must be positive");
}

std::size_t TrainConfig::default_epochs(LossKind loss) { return loss == LossKind::Srl ? 500 : 120; }

double TrainingHistory::time_per_epoch_s() const {
  return epochs.empty() ? 0.0 : total_time_s / static_cast<double>(epochs.size());
}

Regressor init_model(const MorphableModel& model, const Calibration& K, std::size_t n_landmarks,
                     const NetworkConfig& network, std::uint64_t seed) {
  const FrozenMaps frozen = default_frozen_maps(K, n_landmarks, model.eigenvalues);
  return init_regressor(network, 2 * n_landmarks, frozen, seed);
}

GroundTruth ground_truth(const Scene& scene, std::size_t view) {
  return {scene.gt_shape, scene.views.at(view).pose};
}

Eigen::MatrixXd stack_observations(const std::vector<Scene>& scenes, const std::vector<SampleRef>& samples) {
  if (samples.empty()) return {};
  const auto rows = scenes[samples.front().scene].views[samples.front().view].observation.size();
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = scenes[samples[j].scene].views[samples[j].view].observation;
  }
  return out;
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5155FF1E;
constexpr std::uint64_t kTrainViewStream = 0x7EA1;
constexpr std::uint64_t kEvalViewStream = 0xE7A1;

std::size_t n_landmarks_of(const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) {
    if (!s.views.empty()) return static_cast<std::size_t>(s.views.front().observation.size() / 2);
  }
  throw Error(ErrorCode::ConfigInvalid, "dataset has no views");
}

struct BatchOutcome {
  double loss_sum = 0.0;
  Eigen::VectorXd grad;  // gradient of the batch mean
};

// Forward, per-sample loss, backward for one minibatch. `view_seed(j)` seeds
// the MRL views of batch column j.
template <typename ViewSeed>
BatchOutcome run_batch(const Regressor& net, const MorphableModel& model, const Calibration& K,
                       const std::vector<Scene>& scenes, const std::vector<SampleRef>& batch,
                       const std::vector<GroundTruth>& truths, const TrainConfig& config, ViewSeed view_seed,
                       bool want_grad) {
  const Regressor::Forward f = net.forward(stack_observations(scenes, batch));
  const auto n = batch.size();
  std::vector<Prediction> preds(n);
  std::vector<ViewSet> views(config.loss == LossKind::Mrl ? n : 0);
  std::vector<LossJob> jobs(n);
  for (std::size_t j = 0; j < n; ++j) {
    preds[j] = net.prediction(f, static_cast<Eigen::Index>(j));
    jobs[j] = {&preds[j], &truths[j], nullptr};
    if (config.loss == LossKind::Mrl) {
      Rng rng(view_seed(j));
      views[j] = sample_views(config.view_sampling, config.views, rng);
      jobs[j].views = &views[j];
    }
  }

  const LossInputs in{&model, K, config.weights};
  std::vector<LossReport> reports;
  try {
    reports = evaluate_batch(config.loss, in, jobs);
  } catch (const Error& e) {
    // Locate the failing sample for context.
    for (std::size_t j = 0; j < n; ++j) {
      try {
        evaluate_loss(config.loss, in, preds[j], truths[j], jobs[j].views ? *jobs[j].views : ViewSet{});
      } catch (const Error&) {
        const auto& s = scenes[batch[j].scene];
        throw Error(e.code(), std::string(e.what()) + " (subject " + std::to_string(s.subject_id) + ", view " +
                                  std::to_string(batch[j].view) + ")");
      }
    }
    throw;
  }

  BatchOutcome out;
  for (const auto& r : reports) out.loss_sum += r.value;
  if (!want_grad) return out;

  const double scale = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd ga(net.n_components(), n), gq(4, n), gt(3, n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    ga.col(col) = reports[j].grad_alpha * scale;
    gq.col(col) = reports[j].grad_qraw * scale;
    gt.col(col) = reports[j].grad_t * scale;
  }
  out.grad = net.backward(f, ga, gq, gt);
  return out;
}

std::vector<GroundTruth> truths_of(const std::vector<Scene>& scenes, const std::vector<SampleRef>& batch) {
  std::vector<GroundTruth> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(ground_truth(scenes[s.scene], s.view));
  return out;
}

}  // namespace

double mean_loss(const Regressor& net, const MorphableModel& model, const Calibration& K,
                 const std::vector<Scene>& scenes, Split split, const TrainConfig& config) {
  const auto samples = samples_of(scenes, split);
  if (samples.empty()) return 0.0;
  double total = 0.0;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::vector<SampleRef> batch(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                       samples.begin() + static_cast<std::ptrdiff_t>(std::min(samples.size(), start + chunk)));
    const auto truths = truths_of(scenes, batch);
    auto seed = [&](std::size_t j) { return derive_seed(derive_seed(config.seed, kEvalViewStream), start + j); };
    total += run_batch(net, model, K, scenes, batch, truths, config, seed, false).loss_sum;
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(const MorphableModel& model, const Calibration& K, const std::vector<Scene>& scenes,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  auto train_samples = samples_of(scenes, Split::Train);
  if (train_samples.empty()) throw Error(ErrorCode::ConfigInvalid, "training split is empty");
  const bool has_val = !samples_of(scenes, Split::Val).empty();

  TrainResult result{init_model(model, K, n_landmarks_of(scenes), config.network, config.seed), {}};
  Regressor& net = result.net;
  AdamState adam;
  adam.lr = config.lr;

  using clock = std::chrono::steady_clock;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = clock::now();
    Rng shuffle_rng(derive_seed(derive_seed(config.seed, kShuffleStream), epoch));
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord record;
    record.epoch = epoch + 1;
    double loss_sum = 0.0;
    const std::uint64_t epoch_views = derive_seed(derive_seed(config.seed, kTrainViewStream), epoch);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<SampleRef> batch;
      std::vector<std::size_t> ids;
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(train_samples[order[k]]);
        ids.push_back(order[k]);
      }
      const auto truths = truths_of(scenes, batch);
      auto seed = [&](std::size_t j) { return derive_seed(epoch_views, ids[j]); };
      BatchOutcome b = run_batch(net, model, K, scenes, batch, truths, config, seed, true);
      loss_sum += b.loss_sum;
      const double norm = b.grad.norm();
      if (norm > config.clip_norm) {
        b.grad *= config.clip_norm / norm;
        ++record.clipped_batches;
      }
      adam_step(adam, net.params(), b.grad, net.blocks());
    }
    record.train_loss = loss_sum / static_cast<double>(train_samples.size());
    record.val_loss = has_val ? mean_loss(net, model, K, scenes, Split::Val, config) : 0.0;
    record.wall_time_s = std::chrono::duration<double>(clock::now() - started).count();
    result.history.total_time_s += record.wall_time_s;
    result.history.epochs.push_back(record);
    if (on_epoch && !on_epoch(record, net)) break;
  }
  return result;
}

}  // namespace morphloss
