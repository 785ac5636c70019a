#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "morphloss/geometry.hpp"

namespace morphloss {

using Rng = std::mt19937_64;
using SymmetryPairs = std::vector<std::pair<int, int>>;

/// Linear shape model x = m + Phi * alpha.
///
/// The basis has one unit-norm column per component, stored against the
/// point-major flat layout of Shape. Eigenvalues hold the per-component
/// variance, so alpha_i ~ N(0, eigenvalues_i) reproduces the training
/// population.
struct MorphableModel {
  Shape mean;
  Eigen::MatrixXd basis;        // 3N x B
  Eigen::VectorXd eigenvalues;  // B, non-increasing
  SymmetryPairs symmetry_pairs;

  std::size_t n_points() const { return mean.size(); }
  std::size_t n_components() const { return static_cast<std::size_t>(basis.cols()); }
  /// Throws ConfigInvalid when any structural invariant is broken.
  void validate() const;
};

struct ShapeParams {
  Eigen::VectorXd alpha;
};

Shape synthesize(const MorphableModel& model, const ShapeParams& params);
/// Same as synthesize, returning the flat 3N vector.
Eigen::VectorXd synthesize_flat(const MorphableModel& model, const Eigen::VectorXd& alpha);

struct ProcrustesOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
};

/// Generalized Procrustes analysis without scaling. Each output shape is the
/// corresponding input moved rigidly; the outputs are centered and jointly
/// minimize the summed squared distance to their mean.
///
/// The final orientation is fixed by `reference` when given (the mean is
/// rotated onto it). Without a reference the mean is rotated into its own
/// principal-axis frame, so the result does not depend on any common rigid
/// motion of the inputs.
std::vector<Shape> procrustes_align(const std::vector<Shape>& shapes,
                                    const std::optional<Shape>& reference = std::nullopt,
                                    const ProcrustesOptions& options = {});

/// Snapshot PCA over aligned shapes (eigendecomposition of the S x S Gram matrix).
MorphableModel build_model(const std::vector<Shape>& aligned, std::size_t n_components,
                           SymmetryPairs symmetry_pairs = {});

/// Coefficients of a shape in the model basis (orthogonal projection).
Eigen::VectorXd project_to_basis(const MorphableModel& model, const Shape& shape);

ShapeParams sample_params(const MorphableModel& model, Rng& rng);

/// Stable content hash of the model arrays, used to tie datasets to models.
std::uint64_t model_hash(const MorphableModel& model);

// Synthetic face population.

struct FaceTemplate {
  Shape shape;
  SymmetryPairs symmetry_pairs;
};

/// Symmetric half-ellipsoid "face" facing +z with a nose bump and eye
/// sockets, centered at the origin. n_points must be even; point i and
/// i + n_points/2 are mirror images across x = 0.
FaceTemplate make_face_template(std::size_t n_points = 512);

struct PopulationOptions {
  std::size_t n_subjects = 300;
  /// Nuisance rigid motion per scan, removed again by Procrustes.
  double max_rotation_deg = 5.0;
  double max_translation_cm = 1.0;
  double asymmetry_cm = 0.02;
};

/// Identity variation of the template: global width/height/depth scaling,
/// nose and eye-socket shape, cheek fullness and a smooth random field.
std::vector<Shape> make_face_population(const FaceTemplate& face, const PopulationOptions& options,
                                        std::uint64_t seed);

/// Template + population (plus its mirror images) + Procrustes + PCA in one call.
MorphableModel build_synthetic_model(std::size_t n_points, std::size_t n_components,
                                     std::uint64_t seed, std::size_t n_subjects = 300);

}  // namespace morphloss
