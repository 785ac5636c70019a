#include "morphloss/rigid.hpp"

#include <cmath>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace morphloss {

Points3 RigidTransform::apply(const Points3& points) const {
  return (rotation * points).colwise() + translation;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  return {rotation * inner.rotation, rotation * inner.translation + translation};
}

Mat4 RigidTransform::homogeneous() const {
  Mat4 h = Mat4::Identity();
  h.topLeftCorner<3, 3>() = rotation;
  h.topRightCorner<3, 1>() = translation;
  return h;
}

RigidTransform kabsch(const Points3& source, const Points3& target) {
  const Vec3 cs = source.rowwise().mean();
  const Vec3 ct = target.rowwise().mean();
  const Mat3 cov = (target.colwise() - ct) * (source.colwise() - cs).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  RigidTransform out;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.translation = ct - out.rotation * cs;
  return out;
}

double rms_distance(const Points3& a, const Points3& b) {
  return std::sqrt((a - b).colwise().squaredNorm().mean());
}

}  // namespace morphloss
