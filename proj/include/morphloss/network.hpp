#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphloss/geometry.hpp"
#include "morphloss/losses.hpp"

namespace morphloss {

struct NetworkConfig {
  std::size_t encoder_width = 128;
  std::size_t encoder_depth = 2;
  std::size_t head_hidden = 256;
};

/// A named slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

/// Non-trainable affine maps around the network: input normalization and
/// output scaling of the S and T heads.
struct FrozenMaps {
  Eigen::VectorXd input_center;
  double input_scale = 1.0;
  Eigen::VectorXd alpha_scale;  // per identity component, sqrt of the eigenvalue
  double t_scale = 10.0;
};

/// Encoder (tanh MLP) over the observation vector feeding three one-hidden-
/// layer heads: S -> identity parameters, Q -> raw quaternion, T -> translation.
/// All trainable weights live in one flat vector described by `blocks()`.
/// The linear decode x = m + Phi alpha stays in the MorphableModel and is never
/// touched by the optimizer.
class Regressor {
 public:
  Regressor() = default;
  Regressor(const NetworkConfig& config, std::size_t n_inputs, std::size_t n_components, FrozenMaps frozen);

  /// Per-layer activations kept for the backward pass.
  struct Forward {
    std::vector<Eigen::MatrixXd> encoder;  // inputs of each encoder layer, then its output
    std::vector<Eigen::MatrixXd> hidden;   // S, Q, T hidden activations
    std::vector<Eigen::MatrixXd> raw_out;  // S, Q, T linear outputs
    Eigen::MatrixXd alpha;                 // B x batch
    Eigen::MatrixXd q_raw;                 // 4 x batch
    Eigen::MatrixXd t;                     // 3 x batch
  };

  /// observations: 2L x batch.
  Forward forward(const Eigen::MatrixXd& observations) const;
  Prediction prediction(const Forward& f, Eigen::Index column) const;
  Prediction predict(const Eigen::VectorXd& observation) const;

  /// Gradient of sum_j L_j w.r.t. the flat parameters given dL/d(alpha, q_raw, t)
  /// per column.
  Eigen::VectorXd backward(const Forward& f, const Eigen::MatrixXd& grad_alpha, const Eigen::MatrixXd& grad_qraw,
                           const Eigen::MatrixXd& grad_t) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const NetworkConfig& config() const { return config_; }
  const FrozenMaps& frozen() const { return frozen_; }
  std::size_t n_inputs() const { return n_inputs_; }
  std::size_t n_components() const { return n_components_; }

 private:
  struct Layer {
    std::size_t weight = 0;  // block index of W
    std::size_t bias = 0;    // block index of b
  };

  Eigen::Map<const Eigen::MatrixXd> weight(const Layer& l) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const;
  std::size_t add_block(const std::string& name, std::size_t rows, std::size_t cols);
  Layer add_layer(const std::string& name, std::size_t in, std::size_t out);

  NetworkConfig config_;
  std::size_t n_inputs_ = 0;
  std::size_t n_components_ = 0;
  FrozenMaps frozen_;
  Eigen::VectorXd params_;
  std::vector<ParamBlock> blocks_;
  std::vector<Layer> encoder_;
  Layer s_hidden_, s_out_, q_hidden_, q_out_, t_hidden_, t_out_;
};

/// Default frozen maps for a calibration and model: observations become
/// roughly centimeters at the nominal 60 cm distance divided by 10; alpha is
/// scaled by sqrt(eigenvalue), t by 10 cm.
FrozenMaps default_frozen_maps(const Calibration& K, std::size_t n_landmarks, const Eigen::VectorXd& eigenvalues);

/// Fan-in scaled uniform hidden weights; zero output weights with biases set so
/// every input maps to alpha = 0, q = (1, 0, 0, 0), t = (0, 0, -60).
Regressor init_regressor(const NetworkConfig& config, std::size_t n_inputs, const FrozenMaps& frozen,
                         std::uint64_t seed);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

/// Bias-corrected Adam update, in place. Throws NonFiniteGradient naming the
/// offending block when any gradient entry is not finite.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               const std::vector<ParamBlock>& blocks = {});

}  // namespace morphloss
