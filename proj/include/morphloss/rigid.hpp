#pragma once

#include "morphloss/geometry.hpp"

namespace morphloss {

/// x -> R x + t, no scaling.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Points3 apply(const Points3& points) const;
  RigidTransform compose(const RigidTransform& inner) const;  // this * inner
  Mat4 homogeneous() const;
};

/// Least-squares rigid motion taking source onto target (Kabsch, reflection
/// corrected). Columns correspond by index.
RigidTransform kabsch(const Points3& source, const Points3& target);

double rms_distance(const Points3& a, const Points3& b);

}  // namespace morphloss
