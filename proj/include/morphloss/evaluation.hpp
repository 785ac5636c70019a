#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "morphloss/geometry.hpp"
#include "morphloss/network.hpp"
#include "morphloss/rigid.hpp"
#include "morphloss/synthdata.hpp"

namespace morphloss {

/// Mean per-point Euclidean distance, reported in millimeters.
double shape3d_error(const Shape& gt, const Shape& pred);

/// ||t - t^|| in centimeters.
double translation_error(const CameraPose& gt, const CameraPose& pred);

enum class RotationMode {
  Standard,      // 2 acos(min(1, |q . q^|)), the geodesic angle
  PaperLiteral,  // acos(clamp(2 (q . q^), -1, 1)) as printed
};

/// Degrees.
double rotation_error(const CameraPose& gt, const CameraPose& pred, RotationMode mode = RotationMode::Standard);

/// Mean per-point pixel distance between the two projections.
double reprojection_error(const Calibration& K, const Shape& gt_shape, const CameraPose& gt_pose,
                          const Shape& pred_shape, const CameraPose& pred_pose);

/// Camera-frame depth extent (max z - min z) of the predicted posed shape over
/// that of the ground truth. Values well below 1 indicate flattening.
double depth_extent_ratio(const Shape& gt_shape, const CameraPose& gt_pose, const Shape& pred_shape,
                          const CameraPose& pred_pose);

struct IcpOptions {
  double tolerance = 1e-6;  // stop when the RMS changes by less than this
  int max_iterations = 50;
};

struct IcpResult {
  Shape aligned;
  RigidTransform transform;  // source -> target
  double initial_rms = 0.0;  // closest-point RMS after the landmark initialization
  double final_rms = 0.0;
  int iterations = 0;
};

/// Landmark Kabsch initialization followed by point-to-point ICP with
/// brute-force nearest neighbours (ties go to the lowest index). Pairs are
/// (source index, target index). An iteration that would raise the
/// closest-point RMS is rejected and ends the loop.
/// Throws DegenerateLandmarks for fewer than 3 or collinear landmarks.
IcpResult rigid_icp_align(const Shape& source, const Shape& target, const std::vector<std::pair<int, int>>& landmarks,
                          const IcpOptions& options = {});

struct SampleMetrics {
  int subject_id = 0;
  std::size_t view = 0;
  EulerAngles gt_angles;
  double shape3d_mm = 0.0;
  double translation_cm = 0.0;
  double rotation_deg = 0.0;
  double reprojection_px = 0.0;
  double depth_ratio = 0.0;
};

struct MetricReport {
  std::vector<SampleMetrics> rows;
  double shape3d_mm = 0.0;
  double translation_cm = 0.0;
  double rotation_deg = 0.0;
  double reprojection_px = 0.0;

  void aggregate();
};

/// Metrics of a trained regressor on every (scene, view) sample of a split.
MetricReport evaluate(const Regressor& net, const MorphableModel& model, const Calibration& K,
                      const std::vector<Scene>& scenes, Split split);

/// Metrics of fixed predictions, one per sample in `samples` order.
MetricReport evaluate_predictions(const MorphableModel& model, const Calibration& K, const std::vector<Scene>& scenes,
                                  const std::vector<SampleRef>& samples, const std::vector<Prediction>& preds);

/// Mean depth-extent ratio over rows with |yaw| above the threshold; nullopt if none.
std::optional<double> profile_depth_ratio(const MetricReport& report, double min_abs_yaw_deg = 60.0);

enum class AngleAxis { Yaw, Pitch, Roll };
std::string_view to_string(AngleAxis axis);

struct AngleBin {
  AngleAxis axis = AngleAxis::Yaw;
  double lower_deg = 0.0;
  double upper_deg = 0.0;
  std::size_t count = 0;
  double mean_shape3d_mm = 0.0;
  double mean_reprojection_px = 0.0;
};

/// Rows bucketed by the ground-truth yaw, pitch and roll with bins
/// [k w, (k+1) w). Only populated bins are listed, ordered by axis then angle.
std::vector<AngleBin> per_angle_bins(const std::vector<SampleMetrics>& rows, double bin_width_deg);

}  // namespace morphloss
