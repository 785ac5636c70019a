#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "morphloss/geometry.hpp"
#include "morphloss/morphable.hpp"

namespace morphloss {

/// Raw head outputs for one sample. q_raw is the quaternion before the
/// normalization layer.
struct Prediction {
  Eigen::VectorXd alpha;
  Vec4 q_raw = Vec4(1, 0, 0, 0);
  Vec3 t = Vec3(0, 0, -60);
};

struct GroundTruth {
  Shape shape;
  CameraPose pose;
};

/// Weights of the multiterm baselines: alpha_w for Coarse, beta_w/gamma_w for XQT.
struct MultitermWeights {
  double alpha_w = 1.0;
  double beta_w = 1.0;
  double gamma_w = 1.0;

  void validate() const;
};

/// Loss value with gradients w.r.t. the prediction blocks.
struct LossReport {
  double value = 0.0;
  Eigen::VectorXd grad_alpha;
  Vec4 grad_qraw = Vec4::Zero();
  Vec3 grad_t = Vec3::Zero();

  LossReport& operator+=(const LossReport& other);
  LossReport& operator*=(double s);
};

/// Virtual cameras used by the multiview reprojection loss.
struct ViewSet {
  std::vector<CameraPose> views;
};

enum class LossKind { Gal, Srl, Mrl, Coarse, Xqt };

std::string_view to_string(LossKind kind);
/// Throws ConfigInvalid for an unknown name.
LossKind loss_from_string(std::string_view name);
inline constexpr LossKind kAllLosses[] = {LossKind::Coarse, LossKind::Xqt, LossKind::Gal, LossKind::Srl, LossKind::Mrl};
bool is_multiterm(LossKind kind);

// All norms are mean-reduced over coordinates. The l1 subgradient at 0 is 0.

/// Mean |[R|t] x_H - [R^|t^] x^_H| over the 3N camera-frame coordinates.
LossReport gal_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt);

/// Mean absolute pixel difference between the ground-truth and predicted
/// projections over the 2N image coordinates.
LossReport srl_loss(const MorphableModel& model, const Calibration& K, const Prediction& pred, const GroundTruth& gt);

/// Average over views of the per-view mean absolute reprojection difference
/// between x and D(x^), D = [R|t][R^|t^]^-1. Gradients flow through D into the
/// predicted pose.
LossReport mrl_loss(const MorphableModel& model, const Calibration& K, const Prediction& pred, const GroundTruth& gt,
                    const ViewSet& views);

/// mean (x - x^)^2 + alpha_w * mean ([q,t] - [q^,t^])^2, q^ sign-aligned to q.
LossReport coarse_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt,
                       const MultitermWeights& w);

/// mean (x - x^)^2 + beta_w * mean (q - q^)^2 + gamma_w * mean (t - t^)^2.
LossReport xqt_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt,
                    const MultitermWeights& w);

/// ||alpha||^2; the caller applies its weight.
LossReport reg_term(const Prediction& pred);

/// q_pred or -q_pred, whichever has a non-negative dot product with q_gt.
/// A zero dot product keeps q_pred.
Quaternion quaternion_sign_align(const Quaternion& q_gt, const Quaternion& q_pred);

struct LossInputs {
  const MorphableModel* model = nullptr;
  Calibration K;
  MultitermWeights weights;
};

/// Dispatch by kind. `views` is only read for Mrl.
LossReport evaluate_loss(LossKind kind, const LossInputs& in, const Prediction& pred, const GroundTruth& gt,
                         const ViewSet& views = {});

/// Signed residuals whose absolute values the l1 losses average. Empty for
/// the squared losses. Used to keep finite-difference probes away from kinks.
Eigen::VectorXd l1_residuals(LossKind kind, const LossInputs& in, const Prediction& pred, const GroundTruth& gt,
                             const ViewSet& views = {});

}  // namespace morphloss
