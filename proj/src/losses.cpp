#include "morphloss/losses.hpp"

#include <cmath>
#include <string>

#include "morphloss/errors.hpp"

namespace morphloss {

void MultitermWeights::validate() const {
  for (double v : {alpha_w, beta_w, gamma_w}) {
    if (!std::isfinite(v) || v < 0) throw Error(ErrorCode::ConfigInvalid, "multiterm weights must be finite and >= 0");
  }
}

LossReport& LossReport::operator+=(const LossReport& other) {
  value += other.value;
  if (grad_alpha.size() == 0) {
    grad_alpha = other.grad_alpha;
  } else if (other.grad_alpha.size() != 0) {
    grad_alpha += other.grad_alpha;
  }
  grad_qraw += other.grad_qraw;
  grad_t += other.grad_t;
  return *this;
}

LossReport& LossReport::operator*=(double s) {
  value *= s;
  grad_alpha *= s;
  grad_qraw *= s;
  grad_t *= s;
  return *this;
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Gal: return "gal";
    case LossKind::Srl: return "srl";
    case LossKind::Mrl: return "mrl";
    case LossKind::Coarse: return "coarse";
    case LossKind::Xqt: return "xqt";
  }
  return "unknown";
}

LossKind loss_from_string(std::string_view name) {
  for (LossKind k : kAllLosses) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown loss '" + std::string(name) + "'");
}

bool is_multiterm(LossKind kind) { return kind == LossKind::Coarse || kind == LossKind::Xqt; }

Quaternion quaternion_sign_align(const Quaternion& q_gt, const Quaternion& q_pred) {
  return q_gt.dot(q_pred) < 0 ? -q_pred : q_pred;
}

namespace {

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct PredictedState {
  Points3 shape;
  NormalizedQuaternion nq;
  Mat3 rotation;
  Vec3 t;
};

PredictedState prepare(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt) {
  if (gt.shape.size() != model.n_points()) {
    throw Error(ErrorCode::ParamDimension, "ground-truth shape does not match the model point count");
  }
  PredictedState st;
  const Eigen::VectorXd flat = synthesize_flat(model, pred.alpha);
  st.shape = Eigen::Map<const Points3>(flat.data(), 3, flat.size() / 3);
  st.nq = quat_normalize(pred.q_raw);
  st.rotation = quat_to_rotation(st.nq.q);
  st.t = pred.t;
  return st;
}

// Chains gradients w.r.t. the predicted shape points, rotation matrix and
// translation back to (alpha, q_raw, t).
LossReport chain(const MorphableModel& model, const PredictedState& st, double value, const Points3& grad_shape,
                 const Mat3& grad_rotation, const Vec3& grad_t) {
  LossReport r;
  r.value = value;
  r.grad_alpha = model.basis.transpose() * Eigen::Map<const Eigen::VectorXd>(grad_shape.data(), grad_shape.size());
  r.grad_qraw = st.nq.jacobian * rotation_grad_to_quat(st.nq.q, grad_rotation);
  r.grad_t = grad_t;
  return r;
}

// d(mean |target - proj(y)|)/dy for camera points y, given the per-coordinate
// weights s = dL/dproj.
Points3 projection_backward(const Calibration& K, const Points3& cam, const Points2& s) {
  Points3 g(3, cam.cols());
  for (Eigen::Index n = 0; n < cam.cols(); ++n) {
    const double z = cam(2, n);
    const double a = s(0, n) * K.fx / z;
    const double b = s(1, n) * K.fy / z;
    g(0, n) = a;
    g(1, n) = b;
    g(2, n) = -(a * cam(0, n) + b * cam(1, n)) / z;
  }
  return g;
}

Points3 posed(const Mat3& r, const Vec3& t, const Points3& p) { return (r * p).colwise() + t; }

// D(x^) = R (R^T (x^ - t^)) + t expressed in the ground-truth model frame.
struct Distorted {
  Points3 centered;  // x^ - t^
  Points3 local;     // R^^T (x^ - t^)
  Points3 shape;     // D(x^)
};

Distorted distort(const PredictedState& st, const CameraPose& gt_pose) {
  Distorted d;
  d.centered = st.shape.colwise() - st.t;
  d.local = st.rotation.transpose() * d.centered;
  d.shape = posed(gt_pose.rotation(), gt_pose.t(), d.local);
  return d;
}

void check_views(const ViewSet& views) {
  if (views.views.empty()) throw Error(ErrorCode::ConfigInvalid, "MRL needs at least one view");
}

}  // namespace

LossReport gal_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt) {
  const PredictedState st = prepare(model, pred, gt);
  const Points3 target = posed(gt.pose.rotation(), gt.pose.t(), gt.shape.points());
  const Points3 residual = target - posed(st.rotation, st.t, st.shape);
  const double count = static_cast<double>(residual.size());
  const Points3 g = -residual.unaryExpr(&sgn) / count;
  return chain(model, st, residual.cwiseAbs().sum() / count, st.rotation.transpose() * g,
               g * st.shape.transpose(), g.rowwise().sum());
}

LossReport srl_loss(const MorphableModel& model, const Calibration& K, const Prediction& pred, const GroundTruth& gt) {
  const PredictedState st = prepare(model, pred, gt);
  const Points2 target = project(K, gt.pose, gt.shape);
  const Points3 cam = posed(st.rotation, st.t, st.shape);
  const Points2 residual = target - project_camera_points(K, cam);
  const double count = static_cast<double>(residual.size());
  const Points3 g = projection_backward(K, cam, -residual.unaryExpr(&sgn) / count);
  return chain(model, st, residual.cwiseAbs().sum() / count, st.rotation.transpose() * g,
               g * st.shape.transpose(), g.rowwise().sum());
}

LossReport mrl_loss(const MorphableModel& model, const Calibration& K, const Prediction& pred, const GroundTruth& gt,
                    const ViewSet& views) {
  check_views(views);
  const PredictedState st = prepare(model, pred, gt);
  const Distorted d = distort(st, gt.pose);
  const double per_view = 1.0 / static_cast<double>(views.views.size());
  const double count = static_cast<double>(2 * gt.shape.size());

  double value = 0.0;
  Points3 grad_distorted = Points3::Zero(3, d.shape.cols());
  for (const CameraPose& view : views.views) {
    const Points2 target = project(K, view, gt.shape);
    const Points3 cam = posed(view.rotation(), view.t(), d.shape);
    const Points2 residual = target - project_camera_points(K, cam);
    value += per_view * residual.cwiseAbs().sum() / count;
    const Points3 g = projection_backward(K, cam, -residual.unaryExpr(&sgn) * (per_view / count));
    grad_distorted.noalias() += view.rotation().transpose() * g;
  }
  const Points3 grad_local = gt.pose.rotation().transpose() * grad_distorted;
  const Points3 grad_shape = st.rotation * grad_local;
  return chain(model, st, value, grad_shape, d.centered * grad_local.transpose(), -grad_shape.rowwise().sum());
}

namespace {

struct SquaredTerms {
  double shape = 0.0;
  Points3 grad_shape;  // d(shape term)/d x^
  Vec4 q_diff;         // q - s q^
  double sign = 1.0;   // s
  Vec3 t_diff;         // t - t^
};

SquaredTerms squared_terms(const PredictedState& st, const GroundTruth& gt) {
  SquaredTerms out;
  const Points3 diff = gt.shape.points() - st.shape;
  const double count = static_cast<double>(diff.size());
  out.shape = diff.squaredNorm() / count;
  out.grad_shape = -2.0 * diff / count;
  out.sign = gt.pose.q().dot(st.nq.q) < 0 ? -1.0 : 1.0;
  out.q_diff = gt.pose.q().vec() - out.sign * st.nq.q.vec();
  out.t_diff = gt.pose.t() - st.t;
  return out;
}

LossReport chain_squared(const MorphableModel& model, const PredictedState& st, const SquaredTerms& terms, double value,
                         const Vec4& grad_qbar, const Vec3& grad_t) {
  LossReport r;
  r.value = value;
  r.grad_alpha =
      model.basis.transpose() * Eigen::Map<const Eigen::VectorXd>(terms.grad_shape.data(), terms.grad_shape.size());
  r.grad_qraw = st.nq.jacobian * grad_qbar;
  r.grad_t = grad_t;
  return r;
}

}  // namespace

LossReport coarse_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt,
                       const MultitermWeights& w) {
  w.validate();
  const PredictedState st = prepare(model, pred, gt);
  const SquaredTerms terms = squared_terms(st, gt);
  const double pose = (terms.q_diff.squaredNorm() + terms.t_diff.squaredNorm()) / 7.0;
  const Vec4 grad_q = -w.alpha_w * (2.0 / 7.0) * terms.sign * terms.q_diff;
  const Vec3 grad_t = -w.alpha_w * (2.0 / 7.0) * terms.t_diff;
  return chain_squared(model, st, terms, terms.shape + w.alpha_w * pose, grad_q, grad_t);
}

LossReport xqt_loss(const MorphableModel& model, const Prediction& pred, const GroundTruth& gt,
                    const MultitermWeights& w) {
  w.validate();
  const PredictedState st = prepare(model, pred, gt);
  const SquaredTerms terms = squared_terms(st, gt);
  const double q_term = terms.q_diff.squaredNorm() / 4.0;
  const double t_term = terms.t_diff.squaredNorm() / 3.0;
  const Vec4 grad_q = -w.beta_w * 0.5 * terms.sign * terms.q_diff;
  const Vec3 grad_t = -w.gamma_w * (2.0 / 3.0) * terms.t_diff;
  return chain_squared(model, st, terms, terms.shape + w.beta_w * q_term + w.gamma_w * t_term, grad_q, grad_t);
}

LossReport reg_term(const Prediction& pred) {
  LossReport r;
  r.value = pred.alpha.squaredNorm();
  r.grad_alpha = 2.0 * pred.alpha;
  return r;
}

LossReport evaluate_loss(LossKind kind, const LossInputs& in, const Prediction& pred, const GroundTruth& gt,
                         const ViewSet& views) {
  const MorphableModel& model = *in.model;
  switch (kind) {
    case LossKind::Gal: return gal_loss(model, pred, gt);
    case LossKind::Srl: return srl_loss(model, in.K, pred, gt);
    case LossKind::Mrl: return mrl_loss(model, in.K, pred, gt, views);
    case LossKind::Coarse: return coarse_loss(model, pred, gt, in.weights);
    case LossKind::Xqt: return xqt_loss(model, pred, gt, in.weights);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown loss kind");
}

Eigen::VectorXd l1_residuals(LossKind kind, const LossInputs& in, const Prediction& pred, const GroundTruth& gt,
                             const ViewSet& views) {
  const MorphableModel& model = *in.model;
  auto flat = [](const auto& m) { return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size())); };
  switch (kind) {
    case LossKind::Gal: {
      const PredictedState st = prepare(model, pred, gt);
      return flat(Points3(posed(gt.pose.rotation(), gt.pose.t(), gt.shape.points()) - posed(st.rotation, st.t, st.shape)));
    }
    case LossKind::Srl: {
      const PredictedState st = prepare(model, pred, gt);
      return flat(Points2(project(in.K, gt.pose, gt.shape) -
                          project_camera_points(in.K, posed(st.rotation, st.t, st.shape))));
    }
    case LossKind::Mrl: {
      check_views(views);
      const PredictedState st = prepare(model, pred, gt);
      const Distorted d = distort(st, gt.pose);
      const Eigen::Index per = static_cast<Eigen::Index>(2 * gt.shape.size());
      Eigen::VectorXd out(per * static_cast<Eigen::Index>(views.views.size()));
      for (std::size_t v = 0; v < views.views.size(); ++v) {
        const CameraPose& view = views.views[v];
        const Points2 r = project(in.K, view, gt.shape) -
                          project_camera_points(in.K, posed(view.rotation(), view.t(), d.shape));
        out.segment(static_cast<Eigen::Index>(v) * per, per) = flat(r);
      }
      return out;
    }
    case LossKind::Coarse:
    case LossKind::Xqt: return {};
  }
  return {};
}

}  // namespace morphloss
