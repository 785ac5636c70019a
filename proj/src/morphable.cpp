#include "morphloss/morphable.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "morphloss/errors.hpp"
#include "morphloss/rigid.hpp"

namespace morphloss {

void MorphableModel::validate() const {
  const auto rows = static_cast<Eigen::Index>(3 * n_points());
  if (basis.rows() != rows) throw Error(ErrorCode::ConfigInvalid, "basis row count does not match 3 * n_points");
  if (eigenvalues.size() != basis.cols()) throw Error(ErrorCode::ConfigInvalid, "eigenvalue count does not match basis");
  if (basis.cols() > rows) throw Error(ErrorCode::ConfigInvalid, "more components than coordinates");
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (!(eigenvalues[i] >= 0)) throw Error(ErrorCode::ConfigInvalid, "negative eigenvalue");
    if (i + 1 < eigenvalues.size() && eigenvalues[i] < eigenvalues[i + 1]) {
      throw Error(ErrorCode::ConfigInvalid, "eigenvalues are not non-increasing");
    }
  }
  for (const auto& [a, b] : symmetry_pairs) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_points() || static_cast<std::size_t>(b) >= n_points()) {
      throw Error(ErrorCode::ConfigInvalid, "symmetry pair index out of range");
    }
  }
}

Eigen::VectorXd synthesize_flat(const MorphableModel& model, const Eigen::VectorXd& alpha) {
  if (alpha.size() != model.basis.cols()) {
    throw Error(ErrorCode::ParamDimension, "expected " + std::to_string(model.basis.cols()) +
                                               " identity parameters, got " + std::to_string(alpha.size()));
  }
  if (!alpha.allFinite()) throw Error(ErrorCode::ParamDimension, "identity parameters are not finite");
  Eigen::VectorXd flat = model.mean.flat();
  flat.noalias() += model.basis * alpha;
  return flat;
}

Shape synthesize(const MorphableModel& model, const ShapeParams& params) {
  return Shape::from_flat(synthesize_flat(model, params.alpha));
}

namespace {

Points3 centered(const Points3& p) { return p.colwise() - p.rowwise().mean(); }

// Rotation taking a centered point set into its principal-axis frame, with
// axis signs fixed by the third moment so the frame is intrinsic.
Mat3 principal_frame(const Points3& centered_points) {
  const Mat3 cov = centered_points * centered_points.transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Mat3 axes;
  // Largest variance first.
  for (int k = 0; k < 3; ++k) axes.row(k) = eig.eigenvectors().col(2 - k).transpose();
  for (int k = 0; k < 2; ++k) {
    const Eigen::RowVectorXd proj = axes.row(k) * centered_points;
    if (proj.array().cube().sum() < 0) axes.row(k) *= -1;
  }
  axes.row(2) = axes.row(0).cross(axes.row(1));
  return axes;
}

}  // namespace

std::vector<Shape> procrustes_align(const std::vector<Shape>& shapes, const std::optional<Shape>& reference,
                                    const ProcrustesOptions& options) {
  if (shapes.size() < 2) throw Error(ErrorCode::DegenerateGeometry, "Procrustes needs at least two shapes");
  const auto n = shapes.front().points().cols();
  std::vector<Points3> work;
  work.reserve(shapes.size());
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    if (shapes[s].points().cols() != n) {
      throw Error(ErrorCode::DegenerateGeometry, "shape " + std::to_string(s) + " has a different point count");
    }
    Points3 c = centered(shapes[s].points());
    if (c.norm() <= 1e-12) throw Error(ErrorCode::DegenerateGeometry, "shape " + std::to_string(s) + " has coincident points");
    work.push_back(std::move(c));
  }
  if (reference && reference->points().cols() != n) {
    throw Error(ErrorCode::DegenerateGeometry, "reference shape has a different point count");
  }

  auto mean_of = [&]() {
    Points3 m = Points3::Zero(3, n);
    for (const auto& w : work) m += w;
    return Points3(m / static_cast<double>(work.size()));
  };

  Points3 mean = work.front();
  for (int it = 0; it < options.max_iterations; ++it) {
    for (auto& w : work) w = kabsch(w, mean).rotation * w;
    Points3 next = mean_of();
    const double moved = rms_distance(next, mean);
    mean = std::move(next);
    if (moved < options.tolerance) break;
  }

  Mat3 gauge;
  if (reference) {
    gauge = kabsch(mean, centered(reference->points())).rotation;
  } else {
    gauge = principal_frame(mean);
  }
  std::vector<Shape> out;
  out.reserve(work.size());
  for (const auto& w : work) out.emplace_back(gauge * w);
  return out;
}

MorphableModel build_model(const std::vector<Shape>& aligned, std::size_t n_components, SymmetryPairs symmetry_pairs) {
  if (aligned.empty()) throw Error(ErrorCode::RankDeficient, "no shapes to build a model from");
  const auto s_count = static_cast<Eigen::Index>(aligned.size());
  const auto dim = static_cast<Eigen::Index>(3 * aligned.front().size());
  const auto b = static_cast<Eigen::Index>(n_components);
  if (b > s_count - 1 || b > dim) {
    throw Error(ErrorCode::RankDeficient, "requested " + std::to_string(n_components) +
                                              " components but at most " +
                                              std::to_string(std::min(s_count - 1, dim)) + " are available");
  }

  Eigen::MatrixXd data(s_count, dim);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    const auto& shape = aligned[static_cast<std::size_t>(s)];
    if (static_cast<Eigen::Index>(3 * shape.size()) != dim) {
      throw Error(ErrorCode::DegenerateGeometry, "aligned shapes differ in point count");
    }
    data.row(s) = shape.flat().transpose();
  }
  const Eigen::VectorXd mean = data.colwise().mean().transpose();
  data.rowwise() -= mean.transpose();

  const double denom = s_count > 1 ? static_cast<double>(s_count - 1) : 1.0;
  const Eigen::MatrixXd gram = data * data.transpose() / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  const double zero_floor = std::max(top * 1e-12, 1e-300);

  MorphableModel model;
  model.mean = Shape::from_flat(mean);
  model.basis = Eigen::MatrixXd::Zero(dim, b);
  model.eigenvalues = Eigen::VectorXd::Zero(b);
  model.symmetry_pairs = std::move(symmetry_pairs);

  Eigen::Index filled = 0;
  for (; filled < b; ++filled) {
    const Eigen::Index src = s_count - 1 - filled;  // ascending order from the solver
    const double lambda = eig.eigenvalues()[src];
    if (!(lambda > zero_floor)) break;
    Eigen::VectorXd v = data.transpose() * eig.eigenvectors().col(src);
    v.normalize();
    Eigen::Index pivot;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v[pivot] < 0) v = -v;
    model.basis.col(filled) = v;
    model.eigenvalues[filled] = lambda;
  }
  // Zero-variance components: any orthonormal completion will do.
  for (Eigen::Index k = 0; filled < b && k < dim; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(dim, k);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < filled; ++j) v -= model.basis.col(j).dot(v) * model.basis.col(j);
    }
    const double norm = v.norm();
    if (norm < 1e-6) continue;
    model.basis.col(filled) = v / norm;
    ++filled;
  }
  return model;
}

Eigen::VectorXd project_to_basis(const MorphableModel& model, const Shape& shape) {
  if (shape.size() != model.n_points()) throw Error(ErrorCode::ParamDimension, "shape does not match model point count");
  return model.basis.transpose() * (shape.flat() - model.mean.flat());
}

ShapeParams sample_params(const MorphableModel& model, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ShapeParams p{Eigen::VectorXd(model.eigenvalues.size())};
  for (Eigen::Index i = 0; i < p.alpha.size(); ++i) p.alpha[i] = std::sqrt(model.eigenvalues[i]) * normal(rng);
  return p;
}

namespace {

void fnv_mix(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

}  // namespace

std::uint64_t model_hash(const MorphableModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  const Eigen::VectorXd mean = model.mean.flat();
  fnv_mix(h, mean.data(), sizeof(double) * static_cast<std::size_t>(mean.size()));
  fnv_mix(h, model.basis.data(), sizeof(double) * static_cast<std::size_t>(model.basis.size()));
  fnv_mix(h, model.eigenvalues.data(), sizeof(double) * static_cast<std::size_t>(model.eigenvalues.size()));
  for (const auto& [a, b] : model.symmetry_pairs) {
    fnv_mix(h, &a, sizeof(a));
    fnv_mix(h, &b, sizeof(b));
  }
  return h;
}

// Face template geometry, all in centimeters.
namespace {

constexpr double kHalfWidth = 7.0;
constexpr double kHalfHeight = 9.5;
constexpr double kDepth = 5.5;

struct FaceParams {
  double width = 1.0, height = 1.0, depth = 1.0;
  double nose_height = 2.4, nose_width = 1.1, nose_length = 2.2;
  double socket_depth = 0.8;
  double cheek = 0.0;
};

double bump(double x, double y, double cx, double cy, double sx, double sy) {
  const double dx = (x - cx) / sx, dy = (y - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

// Surface point for normalized half-disk coordinates (r, theta) on the side
// given by `side` (+1 right, -1 left).
Vec3 face_point(double r, double theta, double side, const FaceParams& f) {
  const double xs = r * std::cos(theta);
  const double ys = r * std::sin(theta);
  const double x = side * kHalfWidth * xs;
  const double y = kHalfHeight * ys;
  double z = kDepth * std::sqrt(std::max(0.0, 1.0 - r * r));
  z += f.nose_height * bump(x, y, 0.0, -0.5, f.nose_width, f.nose_length);
  z -= f.socket_depth * (bump(x, y, 3.0, 2.5, 1.3, 0.9) + bump(x, y, -3.0, 2.5, 1.3, 0.9));
  z += f.cheek * xs * xs;
  return {f.width * x, f.height * y, f.depth * z};
}

}  // namespace

FaceTemplate make_face_template(std::size_t n_points) {
  if (n_points < 2 || n_points % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "face template needs an even point count");
  const std::size_t half = n_points / 2;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Points3 pts(3, static_cast<Eigen::Index>(n_points));
  FaceTemplate out;
  const FaceParams base;
  for (std::size_t i = 0; i < half; ++i) {
    const double r = std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(half)) * 0.97;
    const double theta = std::fmod(static_cast<double>(i) * golden, std::numbers::pi) - std::numbers::pi / 2;
    pts.col(static_cast<Eigen::Index>(i)) = face_point(r, theta, 1.0, base);
    pts.col(static_cast<Eigen::Index>(i + half)) = face_point(r, theta, -1.0, base);
    out.symmetry_pairs.emplace_back(static_cast<int>(i), static_cast<int>(i + half));
  }
  pts.colwise() -= pts.rowwise().mean();
  out.shape = Shape(std::move(pts));
  return out;
}

std::vector<Shape> make_face_population(const FaceTemplate& face, const PopulationOptions& options, std::uint64_t seed) {
  const std::size_t n_points = face.shape.size();
  const std::size_t half = n_points / 2;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::vector<Shape> out;
  out.reserve(options.n_subjects);
  for (std::size_t s = 0; s < options.n_subjects; ++s) {
    FaceParams f;
    f.width = 1.0 + 0.08 * normal(rng);
    f.height = 1.0 + 0.06 * normal(rng);
    f.depth = 1.0 + 0.12 * normal(rng);
    f.nose_height *= 1.0 + 0.25 * normal(rng);
    f.nose_width *= 1.0 + 0.15 * normal(rng);
    f.nose_length *= 1.0 + 0.15 * normal(rng);
    f.socket_depth *= 1.0 + 0.3 * normal(rng);
    f.cheek = 0.6 * normal(rng);

    // Smooth symmetric field: a few Gaussian bumps mirrored across x = 0.
    struct Blob { double x, y, amp; };
    std::vector<Blob> blobs(4);
    for (auto& b : blobs) b = {std::abs(unit(rng)) * kHalfWidth, unit(rng) * kHalfHeight, 0.25 * normal(rng)};

    Points3 pts(3, static_cast<Eigen::Index>(n_points));
    for (std::size_t i = 0; i < half; ++i) {
      const double r = std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(half)) * 0.97;
      const double theta = std::fmod(static_cast<double>(i) * golden, std::numbers::pi) - std::numbers::pi / 2;
      for (double side : {1.0, -1.0}) {
        Vec3 p = face_point(r, theta, side, f);
        for (const auto& b : blobs) {
          p.z() += b.amp * (bump(p.x(), p.y(), b.x, b.y, 2.0, 2.0) + bump(p.x(), p.y(), -b.x, b.y, 2.0, 2.0));
        }
        const std::size_t idx = side > 0 ? i : i + half;
        pts.col(static_cast<Eigen::Index>(idx)) = p;
      }
    }
    for (Eigen::Index n = 0; n < pts.cols(); ++n) {
      for (int k = 0; k < 3; ++k) pts(k, n) += options.asymmetry_cm * normal(rng);
    }
    pts.colwise() -= pts.rowwise().mean();

    const EulerAngles jitter{options.max_rotation_deg * unit(rng), options.max_rotation_deg * unit(rng),
                             options.max_rotation_deg * unit(rng)};
    const Vec3 shift{options.max_translation_cm * unit(rng), options.max_translation_cm * unit(rng),
                     options.max_translation_cm * unit(rng)};
    pts = (rotation_from_euler(jitter) * pts).colwise() + shift;
    out.emplace_back(std::move(pts));
  }
  return out;
}

MorphableModel build_synthetic_model(std::size_t n_points, std::size_t n_components, std::uint64_t seed,
                                     std::size_t n_subjects) {
  const FaceTemplate face = make_face_template(n_points);
  PopulationOptions options;
  options.n_subjects = n_subjects;
  auto population = make_face_population(face, options, seed);
  // Mirrored copies make the model closed under left-right reflection.
  const std::size_t count = population.size();
  for (std::size_t s = 0; s < count; ++s) {
    Points3 mirrored = population[s].points();
    for (const auto& [a, b] : face.symmetry_pairs) {
      mirrored.col(a) = population[s].points().col(b);
      mirrored.col(b) = population[s].points().col(a);
    }
    mirrored.row(0) *= -1;
    population.emplace_back(std::move(mirrored));
  }
  const auto aligned = procrustes_align(population, face.shape);
  return build_model(aligned, n_components, face.symmetry_pairs);
}

}  // namespace morphloss
