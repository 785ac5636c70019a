#include "morphloss/network.hpp"

#include <cmath>
#include <random>

#include "morphloss/errors.hpp"

namespace morphloss {

Regressor::Regressor(const NetworkConfig& config, std::size_t n_inputs, std::size_t n_components, FrozenMaps frozen)
    : config_(config), n_inputs_(n_inputs), n_components_(n_components), frozen_(std::move(frozen)) {
  if (config.encoder_depth < 1 || config.encoder_width < 1 || config.head_hidden < 1 || n_inputs < 1) {
    throw Error(ErrorCode::ConfigInvalid, "network dimensions must be positive");
  }
  if (static_cast<std::size_t>(frozen_.input_center.size()) != n_inputs ||
      static_cast<std::size_t>(frozen_.alpha_scale.size()) != n_components) {
    throw Error(ErrorCode::ConfigInvalid, "frozen maps do not match the network dimensions");
  }
  std::size_t in = n_inputs;
  for (std::size_t k = 0; k < config.encoder_depth; ++k) {
    encoder_.push_back(add_layer("encoder." + std::to_string(k), in, config.encoder_width));
    in = config.encoder_width;
  }
  s_hidden_ = add_layer("S.hidden", in, config.head_hidden);
  s_out_ = add_layer("S.out", config.head_hidden, n_components);
  q_hidden_ = add_layer("Q.hidden", in, config.head_hidden);
  q_out_ = add_layer("Q.out", config.head_hidden, 4);
  t_hidden_ = add_layer("T.hidden", in, config.head_hidden);
  t_out_ = add_layer("T.out", config.head_hidden, 3);
  std::size_t total = 0;
  for (const auto& b : blocks_) total += b.size();
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

std::size_t Regressor::add_block(const std::string& name, std::size_t rows, std::size_t cols) {
  std::size_t offset = 0;
  if (!blocks_.empty()) offset = blocks_.back().offset + blocks_.back().size();
  blocks_.push_back({name, offset, rows, cols});
  return blocks_.size() - 1;
}

Regressor::Layer Regressor::add_layer(const std::string& name, std::size_t in, std::size_t out) {
  Layer l;
  l.weight = add_block(name + ".W", out, in);
  l.bias = add_block(name + ".b", out, 1);
  return l;
}

Eigen::Map<const Eigen::MatrixXd> Regressor::weight(const Layer& l) const {
  const auto& b = blocks_[l.weight];
  return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

Eigen::Map<const Eigen::VectorXd> Regressor::bias(const Layer& l) const {
  const auto& b = blocks_[l.bias];
  return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows)};
}

Regressor::Forward Regressor::forward(const Eigen::MatrixXd& observations) const {
  if (static_cast<std::size_t>(observations.rows()) != n_inputs_) {
    throw Error(ErrorCode::ParamDimension, "observation length does not match the network input");
  }
  Forward f;
  f.encoder.push_back((observations.colwise() - frozen_.input_center) * frozen_.input_scale);
  for (const Layer& l : encoder_) {
    Eigen::MatrixXd z = weight(l) * f.encoder.back();
    z.colwise() += bias(l);
    f.encoder.push_back(z.array().tanh().matrix());
  }
  const Eigen::MatrixXd& feat = f.encoder.back();
  for (const auto& [hidden, out] : {std::pair{s_hidden_, s_out_}, std::pair{q_hidden_, q_out_}, std::pair{t_hidden_, t_out_}}) {
    Eigen::MatrixXd h = weight(hidden) * feat;
    h.colwise() += bias(hidden);
    f.hidden.push_back(h.array().tanh().matrix());
    Eigen::MatrixXd o = weight(out) * f.hidden.back();
    o.colwise() += bias(out);
    f.raw_out.push_back(std::move(o));
  }
  f.alpha = frozen_.alpha_scale.asDiagonal() * f.raw_out[0];
  f.q_raw = f.raw_out[1];
  f.t = frozen_.t_scale * f.raw_out[2];
  return f;
}

Prediction Regressor::prediction(const Forward& f, Eigen::Index column) const {
  Prediction p;
  p.alpha = f.alpha.col(column);
  p.q_raw = f.q_raw.col(column);
  p.t = f.t.col(column);
  return p;
}

Prediction Regressor::predict(const Eigen::VectorXd& observation) const {
  return prediction(forward(observation), 0);
}

Eigen::VectorXd Regressor::backward(const Forward& f, const Eigen::MatrixXd& grad_alpha,
                                    const Eigen::MatrixXd& grad_qraw, const Eigen::MatrixXd& grad_t) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  auto block = [&](std::size_t idx) {
    const auto& b = blocks_[idx];
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                                       static_cast<Eigen::Index>(b.cols));
  };

  const Eigen::MatrixXd& feat = f.encoder.back();
  Eigen::MatrixXd grad_feat = Eigen::MatrixXd::Zero(feat.rows(), feat.cols());
  const Eigen::MatrixXd head_grads[3] = {frozen_.alpha_scale.asDiagonal() * grad_alpha, grad_qraw,
                                         frozen_.t_scale * grad_t};
  const std::pair<Layer, Layer> heads[3] = {{s_hidden_, s_out_}, {q_hidden_, q_out_}, {t_hidden_, t_out_}};
  for (int h = 0; h < 3; ++h) {
    const auto& [hidden, out] = heads[h];
    const Eigen::MatrixXd& g_out = head_grads[h];
    block(out.weight).noalias() += g_out * f.hidden[static_cast<std::size_t>(h)].transpose();
    block(out.bias).noalias() += g_out.rowwise().sum();
    const Eigen::MatrixXd& act = f.hidden[static_cast<std::size_t>(h)];
    const Eigen::MatrixXd g_hidden =
        ((weight(out).transpose() * g_out).array() * (1.0 - act.array().square())).matrix();
    block(hidden.weight).noalias() += g_hidden * feat.transpose();
    block(hidden.bias).noalias() += g_hidden.rowwise().sum();
    grad_feat.noalias() += weight(hidden).transpose() * g_hidden;
  }

  Eigen::MatrixXd g = grad_feat;
  for (std::size_t k = encoder_.size(); k-- > 0;) {
    const Eigen::MatrixXd& act = f.encoder[k + 1];
    const Eigen::MatrixXd g_pre = (g.array() * (1.0 - act.array().square())).matrix();
    block(encoder_[k].weight).noalias() += g_pre * f.encoder[k].transpose();
    block(encoder_[k].bias).noalias() += g_pre.rowwise().sum();
    if (k > 0) g = weight(encoder_[k]).transpose() * g_pre;
  }
  return grad;
}

FrozenMaps default_frozen_maps(const Calibration& K, std::size_t n_landmarks, const Eigen::VectorXd& eigenvalues) {
  FrozenMaps m;
  m.input_center.resize(static_cast<Eigen::Index>(2 * n_landmarks));
  for (std::size_t j = 0; j < n_landmarks; ++j) {
    m.input_center[static_cast<Eigen::Index>(2 * j)] = K.cx;
    m.input_center[static_cast<Eigen::Index>(2 * j + 1)] = K.cy;
  }
  m.input_scale = 6.0 / K.fx;
  m.alpha_scale = eigenvalues.cwiseMax(0.0).cwiseSqrt();
  m.t_scale = 10.0;
  return m;
}

Regressor init_regressor(const NetworkConfig& config, std::size_t n_inputs, const FrozenMaps& frozen,
                         std::uint64_t seed) {
  Regressor net(config, n_inputs, static_cast<std::size_t>(frozen.alpha_scale.size()), frozen);
  std::mt19937_64 rng(seed);
  Eigen::VectorXd& p = net.params();
  for (const ParamBlock& b : net.blocks()) {
    auto slice = p.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size()));
    const bool is_output = b.name.find(".out.") != std::string::npos;
    if (b.cols == 1 || is_output) {
      slice.setZero();
      continue;
    }
    const double limit = std::sqrt(3.0 / static_cast<double>(b.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < slice.size(); ++i) slice[i] = dist(rng);
  }
  for (const ParamBlock& b : net.blocks()) {
    if (b.name == "Q.out.b") p[static_cast<Eigen::Index>(b.offset)] = 1.0;
    if (b.name == "T.out.b") p[static_cast<Eigen::Index>(b.offset + 2)] = -60.0 / frozen.t_scale;
  }
  return net;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               const std::vector<ParamBlock>& blocks) {
  if (grads.size() != params.size()) throw Error(ErrorCode::ParamDimension, "gradient and parameter sizes differ");
  if (!grads.allFinite()) {
    std::string where = "unknown block";
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
      if (std::isfinite(grads[i])) continue;
      for (const auto& b : blocks) {
        if (static_cast<std::size_t>(i) >= b.offset && static_cast<std::size_t>(i) < b.offset + b.size()) where = b.name;
      }
      if (blocks.empty()) where = "index " + std::to_string(i);
      break;
    }
    throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in " + where);
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace morphloss
