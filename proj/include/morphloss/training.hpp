#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "morphloss/losses.hpp"
#include "morphloss/morphable.hpp"
#include "morphloss/network.hpp"
#include "morphloss/synthdata.hpp"

namespace morphloss {

struct TrainConfig {
  LossKind loss = LossKind::Gal;
  MultitermWeights weights;
  std::size_t views = 2;  // MRL view count
  ViewSamplingConfig view_sampling;
  std::size_t batch_size = 32;
  std::size_t epochs = 120;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  NetworkConfig network;

  /// Throws ConfigInvalid.
  void validate() const;
  /// 500 for SRL, 120 otherwise.
  static std::size_t default_epochs(LossKind loss);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time_s = 0.0;
  /// Batches whose global gradient norm exceeded clip_norm.
  std::size_t clipped_batches = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  double total_time_s = 0.0;
  double time_per_epoch_s() const;
};

struct TrainResult {
  Regressor net;
  TrainingHistory history;
};

/// Regressor sized for the model and dataset layout, in its initial state.
Regressor init_model(const MorphableModel& model, const Calibration& K, std::size_t n_landmarks,
                     const NetworkConfig& network, std::uint64_t seed);

/// Ground truth of every (scene, view) sample.
GroundTruth ground_truth(const Scene& scene, std::size_t view);

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&, const Regressor&)>;

/// Minibatch Adam over the train split with the configured loss. Each
/// (scene, view) pair is one sample; validation never feeds gradients.
TrainResult train(const MorphableModel& model, const Calibration& K, const std::vector<Scene>& scenes,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean configured loss of `net` over a split. MRL uses views seeded per sample.
double mean_loss(const Regressor& net, const MorphableModel& model, const Calibration& K,
                 const std::vector<Scene>& scenes, Split split, const TrainConfig& config);

/// Observations of the given samples stacked as columns.
Eigen::MatrixXd stack_observations(const std::vector<Scene>& scenes, const std::vector<SampleRef>& samples);

}  // namespace morphloss
