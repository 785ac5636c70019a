#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "morphloss/geometry.hpp"
#include "morphloss/losses.hpp"
#include "morphloss/morphable.hpp"

namespace morphloss {

/// Camera pose distribution shared by dataset views and MRL's random views.
/// Angles are uniform in [-range, range] degrees; translation is Gaussian
/// around t_mean with per-axis standard deviation t_sigma (cm).
struct ViewSamplingConfig {
  double yaw_range = 90.0;
  double pitch_range = 30.0;
  double roll_range = 15.0;
  Vec3 t_mean = Vec3(0, 0, -60);
  Vec3 t_sigma = Vec3(2, 2, 5);
};

CameraPose sample_view_pose(const ViewSamplingConfig& config, Rng& rng);
ViewSet sample_views(const ViewSamplingConfig& config, std::size_t count, Rng& rng);

enum class Split { Train, Val, Test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct View {
  CameraPose pose;
  /// Noisy pixel coordinates of the landmarks: (u0, v0, u1, v1, ...).
  Eigen::VectorXd observation;
};

struct Scene {
  int subject_id = 0;
  Split split = Split::Train;
  ShapeParams gt_params;
  Shape gt_shape;
  std::vector<View> views;
};

struct DatasetConfig {
  std::size_t n_train = 200;
  std::size_t n_val = 30;
  std::size_t n_test = 60;
  /// Views per subject are 1 + Poisson(mean_views - 1).
  double mean_views = 4.4;
  ViewSamplingConfig poses;
  std::size_t n_landmarks = 32;
  double noise_px = 1.0;
  Calibration K;
  /// Minimum distance (cm) in front of the camera for every point of a view.
  double min_depth = 1.0;

  std::size_t n_subjects() const { return n_train + n_val + n_test; }
  /// Throws ConfigInvalid.
  void validate() const;
  /// 70/10/20 split of a total subject count.
  static DatasetConfig from_total(std::size_t n_subjects);
};

/// Landmark vertex indices: n_landmarks / 2 spread over the right half of the
/// face followed by their mirror partners, so the set is closed under mirroring.
std::vector<int> landmark_indices(const MorphableModel& model, std::size_t n_landmarks);

/// Mixes a subject index into the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Deterministic under seed. Splits are assigned per subject.
/// Throws PoseSampling when 100 consecutive pose draws leave the frustum.
std::vector<Scene> generate_dataset(const MorphableModel& model, const DatasetConfig& config, std::uint64_t seed);

/// Observation of one view: projected landmarks plus pixel noise.
Eigen::VectorXd observe(const Calibration& K, const CameraPose& pose, const Shape& shape,
                        const std::vector<int>& landmarks, double noise_px, Rng& rng);

/// Mirror image of a scene across the x = 0 plane: points reflected with
/// paired indices swapped, poses mirrored, observations flipped about cx and
/// permuted to the partner landmark. Involutive. The mirrored gt_params are
/// the basis projection of the mirrored shape (exact for mirror-closed models).
/// Throws NotSymmetrizable when the model carries no pairing.
Scene symmetrize(const Scene& scene, const MorphableModel& model, const Calibration& K,
                 const std::vector<int>& landmarks);

CameraPose mirror_pose(const CameraPose& pose);

/// One training/evaluation sample is a (scene, view) pair.
struct SampleRef {
  std::size_t scene = 0;
  std::size_t view = 0;
};

std::vector<SampleRef> samples_of(const std::vector<Scene>& scenes, Split split);
std::vector<Scene> scenes_of(const std::vector<Scene>& scenes, Split split);

}  // namespace morphloss
