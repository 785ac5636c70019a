#pragma once

#include <random>

#include "morphloss/geometry.hpp"
#include "morphloss/morphable.hpp"

namespace morphloss::testing {

inline Quaternion random_unit_quaternion(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 v(n(rng), n(rng), n(rng), n(rng));
  return Quaternion::from_vec(v.normalized());
}

inline Vec3 random_vec3(Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

inline Points3 random_points(Rng& rng, Eigen::Index n, double scale = 5.0) {
  Points3 p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) p.col(i) = random_vec3(rng, scale);
  return p;
}

// Small model shared by the tests: 64 points, 8 components.
inline const MorphableModel& small_model() {
  static const MorphableModel model = build_synthetic_model(64, 8, 42, 60);
  return model;
}

}  // namespace morphloss::testing
