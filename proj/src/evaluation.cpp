#include "morphloss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include <Eigen/SVD>

#include "morphloss/errors.hpp"
#include "morphloss/training.hpp"

namespace morphloss {

namespace {

void check_sizes(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ParamDimension, "shapes differ in point count");
}

}  // namespace

double shape3d_error(const Shape& gt, const Shape& pred) {
  check_sizes(gt, pred);
  return 10.0 * (gt.points() - pred.points()).colwise().norm().mean();
}

double translation_error(const CameraPose& gt, const CameraPose& pred) { return (gt.t() - pred.t()).norm(); }

double rotation_error(const CameraPose& gt, const CameraPose& pred, RotationMode mode) {
  const double dot = gt.q().dot(pred.q());
  if (mode == RotationMode::PaperLiteral) return rad_to_deg(std::acos(std::clamp(2.0 * dot, -1.0, 1.0)));
  return rad_to_deg(2.0 * std::acos(std::min(1.0, std::abs(dot))));
}

double reprojection_error(const Calibration& K, const Shape& gt_shape, const CameraPose& gt_pose,
                          const Shape& pred_shape, const CameraPose& pred_pose) {
  check_sizes(gt_shape, pred_shape);
  return (project(K, gt_pose, gt_shape) - project(K, pred_pose, pred_shape)).colwise().norm().mean();
}

double depth_extent_ratio(const Shape& gt_shape, const CameraPose& gt_pose, const Shape& pred_shape,
                          const CameraPose& pred_pose) {
  auto extent = [](const Shape& s, const CameraPose& p) {
    const Eigen::RowVectorXd z = pose_apply(p, s).points().row(2);
    return z.maxCoeff() - z.minCoeff();
  };
  const double gt = extent(gt_shape, gt_pose);
  if (!(gt > 0)) throw Error(ErrorCode::DegenerateGeometry, "ground-truth shape has no depth extent");
  return extent(pred_shape, pred_pose) / gt;
}

namespace {

// Closest target column for each source column; ties go to the lowest index.
std::vector<Eigen::Index> nearest(const Points3& source, const Points3& target) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(source.cols()));
  for (Eigen::Index i = 0; i < source.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const double d = (source.col(i) - target.col(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

Points3 gather(const Points3& p, const std::vector<Eigen::Index>& idx) {
  Points3 out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = p.col(idx[k]);
  return out;
}

}  // namespace

IcpResult rigid_icp_align(const Shape& source, const Shape& target, const std::vector<std::pair<int, int>>& landmarks,
                          const IcpOptions& options) {
  if (landmarks.size() < 3) throw Error(ErrorCode::DegenerateLandmarks, "need at least 3 landmark pairs");
  std::vector<Eigen::Index> src_idx, tgt_idx;
  for (const auto& [s, t] : landmarks) {
    if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= source.size() || static_cast<std::size_t>(t) >= target.size()) {
      throw Error(ErrorCode::DegenerateLandmarks, "landmark index out of range");
    }
    src_idx.push_back(s);
    tgt_idx.push_back(t);
  }
  const Points3 src_lm = gather(source.points(), src_idx);
  const Points3 tgt_lm = gather(target.points(), tgt_idx);
  {
    const Points3 c = src_lm.colwise() - src_lm.rowwise().mean();
    Eigen::JacobiSVD<Points3> svd(c);
    const auto sv = svd.singularValues();
    if (sv[1] <= 1e-9 * std::max(1.0, sv[0])) throw Error(ErrorCode::DegenerateLandmarks, "landmarks are collinear");
  }

  IcpResult out;
  out.transform = kabsch(src_lm, tgt_lm);
  Points3 current = out.transform.apply(source.points());
  auto closest_rms = [&](const Points3& pts, std::vector<Eigen::Index>& match) {
    match = nearest(pts, target.points());
    return rms_distance(pts, gather(target.points(), match));
  };
  std::vector<Eigen::Index> match;
  double rms = closest_rms(current, match);
  out.initial_rms = rms;
  for (int it = 0; it < options.max_iterations; ++it) {
    const RigidTransform step = kabsch(current, gather(target.points(), match));
    const Points3 moved = step.apply(current);
    std::vector<Eigen::Index> next_match;
    const double next_rms = closest_rms(moved, next_match);
    if (next_rms > rms) break;
    out.transform = step.compose(out.transform);
    current = moved;
    match = std::move(next_match);
    out.iterations = it + 1;
    const double change = rms - next_rms;
    rms = next_rms;
    if (change < options.tolerance) break;
  }
  out.final_rms = rms;
  out.aligned = Shape(current);
  return out;
}

void MetricReport::aggregate() {
  shape3d_mm = translation_cm = rotation_deg = reprojection_px = 0.0;
  if (rows.empty()) return;
  for (const auto& r : rows) {
    shape3d_mm += r.shape3d_mm;
    translation_cm += r.translation_cm;
    rotation_deg += r.rotation_deg;
    reprojection_px += r.reprojection_px;
  }
  const double n = static_cast<double>(rows.size());
  shape3d_mm /= n;
  translation_cm /= n;
  rotation_deg /= n;
  reprojection_px /= n;
}

MetricReport evaluate_predictions(const MorphableModel& model, const Calibration& K, const std::vector<Scene>& scenes,
                                  const std::vector<SampleRef>& samples, const std::vector<Prediction>& preds) {
  if (samples.size() != preds.size()) throw Error(ErrorCode::ParamDimension, "one prediction per sample expected");
  MetricReport report;
  report.rows.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Scene& scene = scenes[samples[k].scene];
    const CameraPose& gt_pose = scene.views[samples[k].view].pose;
    const Shape pred_shape = synthesize(model, {preds[k].alpha});
    const CameraPose pred_pose(quat_normalize(preds[k].q_raw).q, preds[k].t);
    SampleMetrics m;
    m.subject_id = scene.subject_id;
    m.view = samples[k].view;
    m.gt_angles = euler_from_rotation(gt_pose.rotation());
    m.shape3d_mm = shape3d_error(scene.gt_shape, pred_shape);
    m.translation_cm = translation_error(gt_pose, pred_pose);
    m.rotation_deg = rotation_error(gt_pose, pred_pose);
    m.reprojection_px = reprojection_error(K, scene.gt_shape, gt_pose, pred_shape, pred_pose);
    m.depth_ratio = depth_extent_ratio(scene.gt_shape, gt_pose, pred_shape, pred_pose);
    report.rows.push_back(m);
  }
  report.aggregate();
  return report;
}

MetricReport evaluate(const Regressor& net, const MorphableModel& model, const Calibration& K,
                      const std::vector<Scene>& scenes, Split split) {
  const auto samples = samples_of(scenes, split);
  if (samples.empty()) return {};
  const Regressor::Forward f = net.forward(stack_observations(scenes, samples));
  std::vector<Prediction> preds;
  preds.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) preds.push_back(net.prediction(f, static_cast<Eigen::Index>(k)));
  return evaluate_predictions(model, K, scenes, samples, preds);
}

std::optional<double> profile_depth_ratio(const MetricReport& report, double min_abs_yaw_deg) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : report.rows) {
    if (std::abs(r.gt_angles.yaw) <= min_abs_yaw_deg) continue;
    sum += r.depth_ratio;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string_view to_string(AngleAxis axis) {
  switch (axis) {
    case AngleAxis::Yaw: return "yaw";
    case AngleAxis::Pitch: return "pitch";
    case AngleAxis::Roll: return "roll";
  }
  return "unknown";
}

std::vector<AngleBin> per_angle_bins(const std::vector<SampleMetrics>& rows, double bin_width_deg) {
  if (!(bin_width_deg > 0)) throw Error(ErrorCode::ConfigInvalid, "bin width must be positive");
  struct Acc {
    std::size_t count = 0;
    double shape = 0.0;
    double repro = 0.0;
  };
  std::map<std::tuple<int, long long>, Acc> acc;
  for (const auto& r : rows) {
    const double angles[3] = {r.gt_angles.yaw, r.gt_angles.pitch, r.gt_angles.roll};
    for (int axis = 0; axis < 3; ++axis) {
      const auto bin = static_cast<long long>(std::floor(angles[axis] / bin_width_deg));
      Acc& a = acc[{axis, bin}];
      ++a.count;
      a.shape += r.shape3d_mm;
      a.repro += r.reprojection_px;
    }
  }
  std::vector<AngleBin> out;
  for (const auto& [key, a] : acc) {
    const auto [axis, bin] = key;
    AngleBin b;
    b.axis = static_cast<AngleAxis>(axis);
    b.lower_deg = static_cast<double>(bin) * bin_width_deg;
    b.upper_deg = b.lower_deg + bin_width_deg;
    b.count = a.count;
    b.mean_shape3d_mm = a.shape / static_cast<double>(a.count);
    b.mean_reprojection_px = a.repro / static_cast<double>(a.count);
    out.push_back(b);
  }
  return out;
}

}  // namespace morphloss
