#include "morphloss/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "morphloss/errors.hpp"

namespace morphloss {

CameraPose sample_view_pose(const ViewSamplingConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  EulerAngles a;
  a.yaw = config.yaw_range * unit(rng);
  a.pitch = config.pitch_range * unit(rng);
  a.roll = config.roll_range * unit(rng);
  Vec3 t;
  for (int k = 0; k < 3; ++k) t[k] = config.t_mean[k] + config.t_sigma[k] * normal(rng);
  return CameraPose(rotation_to_quat(rotation_from_euler(a)), t);
}

ViewSet sample_views(const ViewSamplingConfig& config, std::size_t count, Rng& rng) {
  ViewSet out;
  out.views.reserve(count);
  for (std::size_t v = 0; v < count; ++v) out.views.push_back(sample_view_pose(config, rng));
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown split '" + std::string(name) + "'");
}

void DatasetConfig::validate() const {
  if (n_subjects() == 0) throw Error(ErrorCode::ConfigInvalid, "dataset needs at least one subject");
  if (!(mean_views >= 1.0)) throw Error(ErrorCode::ConfigInvalid, "mean views per subject must be >= 1");
  if (n_landmarks < 2 || n_landmarks % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "landmark count must be even and >= 2");
  if (!(noise_px >= 0)) throw Error(ErrorCode::ConfigInvalid, "observation noise must be >= 0");
  K.validate();
}

DatasetConfig DatasetConfig::from_total(std::size_t n_subjects) {
  DatasetConfig c;
  c.n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n_subjects)));
  c.n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n_subjects)));
  c.n_test = n_subjects - std::min(n_subjects, c.n_train + c.n_val);
  return c;
}

std::vector<int> landmark_indices(const MorphableModel& model, std::size_t n_landmarks) {
  if (model.symmetry_pairs.empty()) throw Error(ErrorCode::NotSymmetrizable, "model has no left-right pairing");
  const std::size_t half = n_landmarks / 2;
  const std::size_t pairs = model.symmetry_pairs.size();
  if (half == 0 || half > pairs) throw Error(ErrorCode::ConfigInvalid, "invalid landmark count for this model");
  std::vector<int> out(n_landmarks);
  for (std::size_t k = 0; k < half; ++k) {
    const auto& [right, left] = model.symmetry_pairs[(2 * k + 1) * pairs / (2 * half)];
    out[k] = right;
    out[k + half] = left;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Eigen::VectorXd observe(const Calibration& K, const CameraPose& pose, const Shape& shape,
                        const std::vector<int>& landmarks, double noise_px, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Points3 picked(3, static_cast<Eigen::Index>(landmarks.size()));
  for (std::size_t j = 0; j < landmarks.size(); ++j) picked.col(static_cast<Eigen::Index>(j)) = shape.point(static_cast<std::size_t>(landmarks[j]));
  const Points2 px = project(K, pose, Shape(std::move(picked)));
  Eigen::VectorXd obs(px.size());
  for (Eigen::Index j = 0; j < px.cols(); ++j) {
    obs[2 * j] = px(0, j);
    obs[2 * j + 1] = px(1, j);
  }
  if (noise_px > 0) {
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs[i] += noise_px * normal(rng);
  }
  return obs;
}

namespace {

bool in_frustum(const DatasetConfig& config, const CameraPose& pose, const Shape& shape,
                const std::vector<int>& landmarks) {
  const Points3 cam = pose_apply(pose, shape).points();
  if ((cam.row(2).array() > -config.min_depth).any()) return false;
  for (int idx : landmarks) {
    const Vec3 p = cam.col(idx);
    const double u = config.K.fx * p.x() / p.z() + config.K.cx;
    const double v = config.K.fy * p.y() / p.z() + config.K.cy;
    if (u < 0 || u > config.K.width || v < 0 || v > config.K.height) return false;
  }
  return true;
}

}  // namespace

std::vector<Scene> generate_dataset(const MorphableModel& model, const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  const std::vector<int> landmarks = landmark_indices(model, config.n_landmarks);
  const std::size_t n = config.n_subjects();

  std::vector<Split> split_of(n);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, 0xA11CE));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t k = 0; k < n; ++k) {
      split_of[order[k]] = k < config.n_train ? Split::Train
                           : k < config.n_train + config.n_val ? Split::Val
                                                                : Split::Test;
    }
  }

  std::vector<Scene> scenes(n);
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng(derive_seed(seed, s));
    Scene& scene = scenes[s];
    scene.subject_id = static_cast<int>(s);
    scene.split = split_of[s];
    scene.gt_params = sample_params(model, rng);
    scene.gt_shape = synthesize(model, scene.gt_params);

    std::poisson_distribution<int> extra(config.mean_views - 1.0);
    const int n_views = 1 + (config.mean_views > 1.0 ? extra(rng) : 0);
    for (int v = 0; v < n_views; ++v) {
      int attempt = 0;
      CameraPose pose = sample_view_pose(config.poses, rng);
      while (!in_frustum(config, pose, scene.gt_shape, landmarks)) {
        if (++attempt >= 100) {
          throw Error(ErrorCode::PoseSampling, "subject " + std::to_string(s) + ": no in-frustum pose after 100 draws");
        }
        pose = sample_view_pose(config.poses, rng);
      }
      scene.views.push_back({pose, observe(config.K, pose, scene.gt_shape, landmarks, config.noise_px, rng)});
    }
  }
  return scenes;
}

CameraPose mirror_pose(const CameraPose& pose) {
  const Quaternion& q = pose.q();
  return CameraPose({q.w, q.x, -q.y, -q.z}, Vec3(-pose.t().x(), pose.t().y(), pose.t().z()));
}

Scene symmetrize(const Scene& scene, const MorphableModel& model, const Calibration& K,
                 const std::vector<int>& landmarks) {
  if (model.symmetry_pairs.empty()) throw Error(ErrorCode::NotSymmetrizable, "model has no left-right pairing");
  const std::size_t n = scene.gt_shape.size();
  std::vector<int> partner(n);
  std::iota(partner.begin(), partner.end(), 0);
  for (const auto& [a, b] : model.symmetry_pairs) {
    partner[static_cast<std::size_t>(a)] = b;
    partner[static_cast<std::size_t>(b)] = a;
  }

  Scene out;
  out.subject_id = scene.subject_id;
  out.split = scene.split;
  Points3 pts(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = scene.gt_shape.point(static_cast<std::size_t>(partner[i]));
    pts.col(static_cast<Eigen::Index>(i)) = Vec3(-p.x(), p.y(), p.z());
  }
  out.gt_shape = Shape(std::move(pts));
  out.gt_params.alpha = project_to_basis(model, out.gt_shape);

  // Position of each landmark's mirror partner within the landmark list.
  std::vector<std::size_t> landmark_partner(landmarks.size());
  for (std::size_t j = 0; j < landmarks.size(); ++j) {
    const int target = partner[static_cast<std::size_t>(landmarks[j])];
    const auto it = std::find(landmarks.begin(), landmarks.end(), target);
    if (it == landmarks.end()) throw Error(ErrorCode::NotSymmetrizable, "landmark set is not closed under mirroring");
    landmark_partner[j] = static_cast<std::size_t>(it - landmarks.begin());
  }

  for (const View& view : scene.views) {
    View mirrored;
    mirrored.pose = mirror_pose(view.pose);
    mirrored.observation.resize(view.observation.size());
    for (std::size_t j = 0; j < landmarks.size(); ++j) {
      const auto src = static_cast<Eigen::Index>(2 * landmark_partner[j]);
      const auto dst = static_cast<Eigen::Index>(2 * j);
      mirrored.observation[dst] = 2.0 * K.cx - view.observation[src];
      mirrored.observation[dst + 1] = view.observation[src + 1];
    }
    out.views.push_back(std::move(mirrored));
  }
  return out;
}

std::vector<SampleRef> samples_of(const std::vector<Scene>& scenes, Split split) {
  std::vector<SampleRef> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    if (scenes[s].split != split) continue;
    for (std::size_t v = 0; v < scenes[s].views.size(); ++v) out.push_back({s, v});
  }
  return out;
}

std::vector<Scene> scenes_of(const std::vector<Scene>& scenes, Split split) {
  std::vector<Scene> out;
  std::copy_if(scenes.begin(), scenes.end(), std::back_inserter(out), [&](const Scene& s) { return s.split == split; });
  return out;
}

}  // namespace morphloss
