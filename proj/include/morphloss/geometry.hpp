#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace morphloss {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Points3 = Eigen::Matrix3Xd;
using Points2 = Eigen::Matrix2Xd;

inline constexpr double kUnitTolerance = 1e-9;
inline constexpr double kMinRawQuaternionNorm = 1e-12;
inline constexpr double kMinDepth = 1e-9;

/// Hamilton quaternion, scalar first.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

  Vec4 vec() const { return {w, x, y, z}; }
  double squared_norm() const { return w * w + x * x + y * y + z * z; }
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  bool is_unit(double tol = kUnitTolerance) const;
  Quaternion operator-() const { return {-w, -x, -y, -z}; }
};

/// Result of the quaternion normalization layer.
struct NormalizedQuaternion {
  Quaternion q;
  /// d(raw/|raw|)/d(raw) = (I - q q^T) / |raw|, symmetric.
  Mat4 jacobian;
};

/// Throws DegenerateQuaternion when |raw| <= 1e-12.
NormalizedQuaternion quat_normalize(const Vec4& raw);

/// Throws NotNormalized for a non-unit quaternion.
Mat3 quat_to_rotation(const Quaternion& q);

/// Partial derivatives of the rotation polynomial with respect to (w, x, y, z),
/// evaluated at q. Used to chain matrix gradients back to the quaternion.
std::array<Mat3, 4> rotation_partials(const Quaternion& q);

/// Contracts a 3x3 gradient dL/dR against rotation_partials(q).
Vec4 rotation_grad_to_quat(const Quaternion& q, const Mat3& grad_rotation);

/// Inverse of quat_to_rotation for a proper rotation; returns the w >= 0 representative.
Quaternion rotation_to_quat(const Mat3& rotation);

/// Ordered 3D point set in centimeters. Index n always denotes the same vertex.
class Shape {
 public:
  Shape() = default;
  /// Throws DegenerateGeometry on an empty or non-finite point set.
  explicit Shape(Points3 points);
  static Shape from_flat(const Eigen::VectorXd& flat);

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  const Points3& points() const { return points_; }
  Vec3 point(std::size_t n) const { return points_.col(static_cast<Eigen::Index>(n)); }
  Vec3 centroid() const { return points_.rowwise().mean(); }
  /// Point-major flat layout (x0, y0, z0, x1, ...), the 3N vector used by the morphable model.
  Eigen::VectorXd flat() const;
  Eigen::Matrix4Xd homogeneous() const;

 private:
  Points3 points_;
};

/// Extrinsics mapping model coordinates to camera coordinates: y = R(q) x + t.
class CameraPose {
 public:
  CameraPose() = default;
  /// Throws NotNormalized unless q is unit.
  CameraPose(const Quaternion& q, const Vec3& t);

  const Quaternion& q() const { return q_; }
  const Vec3& t() const { return t_; }
  Mat3 rotation() const { return rotation_; }
  Mat34 extrinsic() const;
  Mat4 homogeneous() const;
  /// Closed form [R^T | -R^T t].
  Mat4 inverse_homogeneous() const;

 private:
  Quaternion q_;
  Vec3 t_ = Vec3::Zero();
  Mat3 rotation_ = Mat3::Identity();
};

/// Pinhole intrinsics plus image size, all in pixels.
struct Calibration {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 112.0;
  double cy = 112.0;
  double width = 224.0;
  double height = 224.0;

  /// Throws ConfigInvalid when the intrinsics violate fx, fy > 0 or put the
  /// principal point outside the image.
  void validate() const;
  Mat3 matrix() const;
};

Shape pose_apply(const CameraPose& pose, const Shape& shape);

/// (u'/w', v'/w') per point with (u', v', w') = K [R|t] x_H. The sign of w' is
/// kept, so shapes at negative camera depth project normally. Throws
/// BehindImagePlane naming the first point with |w'| <= 1e-9.
Points2 project(const Calibration& K, const CameraPose& pose, const Shape& shape);

/// Projection of points already expressed in camera coordinates.
Points2 project_camera_points(const Calibration& K, const Points3& camera_points);

/// [R(q)|t] * [R(q_pred)|t_pred]^-1 as a homogeneous 4x4 matrix.
Mat4 pose_relative(const CameraPose& gt, const CameraPose& pred);

/// Yaw about y, pitch about x, roll about z; R = Rz(roll) Rx(pitch) Ry(yaw). Degrees.
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

Mat3 rotation_from_euler(const EulerAngles& angles);
EulerAngles euler_from_rotation(const Mat3& rotation);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

}  // namespace morphloss
