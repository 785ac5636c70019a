#include "morphloss/geometry.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <string>

#include "morphloss/errors.hpp"

namespace morphloss {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateQuaternion: return "DegenerateQuaternion";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::BehindImagePlane: return "BehindImagePlane";
    case ErrorCode::ParamDimension: return "ParamDimension";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotSymmetrizable: return "NotSymmetrizable";
    case ErrorCode::PoseSampling: return "PoseSampling";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorCode::ScaleUndefined: return "ScaleUndefined";
    case ErrorCode::SearchFailed: return "SearchFailed";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool Quaternion::is_unit(double tol) const { return std::abs(squared_norm() - 1.0) <= tol; }

NormalizedQuaternion quat_normalize(const Vec4& raw) {
  const double norm = raw.norm();
  if (!(norm > kMinRawQuaternionNorm)) {
    throw Error(ErrorCode::DegenerateQuaternion,
                "raw quaternion norm " + std::to_string(norm) + " is too small to normalize");
  }
  const Vec4 unit = raw / norm;
  NormalizedQuaternion out;
  out.q = Quaternion::from_vec(unit);
  out.jacobian = (Mat4::Identity() - unit * unit.transpose()) / norm;
  return out;
}

Mat3 quat_to_rotation(const Quaternion& q) {
  if (!q.is_unit()) {
    throw Error(ErrorCode::NotNormalized,
                "quaternion squared norm " + std::to_string(q.squared_norm()) + " is not 1");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<Mat3, 4> rotation_partials(const Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return d;
}

Vec4 rotation_grad_to_quat(const Quaternion& q, const Mat3& grad_rotation) {
  const auto partials = rotation_partials(q);
  Vec4 g;
  for (int k = 0; k < 4; ++k) g[k] = partials[k].cwiseProduct(grad_rotation).sum();
  return g;
}

Quaternion rotation_to_quat(const Mat3& r) {
  // Shepperd: branch on the largest diagonal combination for stability.
  const double trace = r.trace();
  Quaternion q;
  if (trace > r(0, 0) && trace > r(1, 1) && trace > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  if (q.w < 0) q = -q;
  const double n = std::sqrt(q.squared_norm());
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Shape::Shape(Points3 points) : points_(std::move(points)) {
  if (points_.cols() < 1) throw Error(ErrorCode::DegenerateGeometry, "shape has no points");
  if (!points_.allFinite()) throw Error(ErrorCode::DegenerateGeometry, "shape has non-finite coordinates");
}

Shape Shape::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() % 3 != 0) {
    throw Error(ErrorCode::ParamDimension, "flat shape length is not a multiple of 3");
  }
  return Shape(Eigen::Map<const Points3>(flat.data(), 3, flat.size() / 3));
}

Eigen::VectorXd Shape::flat() const {
  return Eigen::Map<const Eigen::VectorXd>(points_.data(), points_.size());
}

Eigen::Matrix4Xd Shape::homogeneous() const {
  Eigen::Matrix4Xd h(4, points_.cols());
  h.topRows<3>() = points_;
  h.row(3).setOnes();
  return h;
}

CameraPose::CameraPose(const Quaternion& q, const Vec3& t) : q_(q), t_(t), rotation_(quat_to_rotation(q)) {}

Mat34 CameraPose::extrinsic() const {
  Mat34 e;
  e.leftCols<3>() = rotation_;
  e.col(3) = t_;
  return e;
}

Mat4 CameraPose::homogeneous() const {
  Mat4 h = Mat4::Identity();
  h.topLeftCorner<3, 3>() = rotation_;
  h.topRightCorner<3, 1>() = t_;
  return h;
}

Mat4 CameraPose::inverse_homogeneous() const {
  Mat4 h = Mat4::Identity();
  h.topLeftCorner<3, 3>() = rotation_.transpose();
  h.topRightCorner<3, 1>() = -rotation_.transpose() * t_;
  return h;
}

void Calibration::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw Error(ErrorCode::ConfigInvalid, "focal lengths must be positive");
  if (!(width > 0) || !(height > 0)) throw Error(ErrorCode::ConfigInvalid, "image size must be positive");
  if (cx < 0 || cx > width || cy < 0 || cy > height) {
    throw Error(ErrorCode::ConfigInvalid, "principal point outside the image");
  }
}

Mat3 Calibration::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Shape pose_apply(const CameraPose& pose, const Shape& shape) {
  Points3 out = (pose.rotation() * shape.points()).colwise() + pose.t();
  return Shape(std::move(out));
}

Points2 project_camera_points(const Calibration& K, const Points3& camera_points) {
  Points2 out(2, camera_points.cols());
  for (Eigen::Index n = 0; n < camera_points.cols(); ++n) {
    const double depth = camera_points(2, n);
    if (std::abs(depth) <= kMinDepth) {
      throw Error(ErrorCode::BehindImagePlane, "point " + std::to_string(n) + " lies on the camera plane");
    }
    out(0, n) = K.fx * camera_points(0, n) / depth + K.cx;
    out(1, n) = K.fy * camera_points(1, n) / depth + K.cy;
  }
  return out;
}

Points2 project(const Calibration& K, const CameraPose& pose, const Shape& shape) {
  return project_camera_points(K, pose_apply(pose, shape).points());
}

Mat4 pose_relative(const CameraPose& gt, const CameraPose& pred) {
  return gt.homogeneous() * pred.inverse_homogeneous();
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

Mat3 rotation_from_euler(const EulerAngles& a) {
  const double yaw = deg_to_rad(a.yaw), pitch = deg_to_rad(a.pitch), roll = deg_to_rad(a.roll);
  Mat3 ry, rx, rz;
  ry << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);
  rx << 1, 0, 0, 0, std::cos(pitch), -std::sin(pitch), 0, std::sin(pitch), std::cos(pitch);
  rz << std::cos(roll), -std::sin(roll), 0, std::sin(roll), std::cos(roll), 0, 0, 0, 1;
  return rz * rx * ry;
}

EulerAngles euler_from_rotation(const Mat3& r) {
  EulerAngles a;
  a.pitch = rad_to_deg(std::asin(std::clamp(r(2, 1), -1.0, 1.0)));
  a.yaw = rad_to_deg(std::atan2(-r(2, 0), r(2, 2)));
  a.roll = rad_to_deg(std::atan2(-r(0, 1), r(1, 1)));
  return a;
}

}  // namespace morphloss
