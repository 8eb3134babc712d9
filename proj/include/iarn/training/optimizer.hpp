#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "iarn/error.hpp"
#include "iarn/model/network.hpp"
#include "iarn/numerics/tape.hpp"

namespace iarn {

/// (1/N) sum (prediction - target)^2
inline double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw ContractError("mse_loss: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) throw ContractError("mse_loss of an empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    acc += e * e;
  }
  return acc / static_cast<double>(predictions.size());
}

/// Clamps every gradient element into [-bound, bound].
inline void clip_gradients(Gradients& grads, double bound) {
  if (!(bound > 0.0)) throw ContractError("clip bound must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.touched(i)) continue;
    for (auto& v : grads.slot(i).data()) v = std::clamp(v, -bound, bound);
  }
}

struct OptimizerState {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::vector<Tensor> mean_square;

  OptimizerState() = default;
  OptimizerState(const ParameterStore& params, double lr, double rho = 0.9, double eps = 1e-8)
      : learning_rate(lr), decay(rho), epsilon(eps) {
    mean_square.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) mean_square.emplace_back(params.at(i).shape());
  }
};

/// s <- rho s + (1 - rho) g^2;  theta <- theta - lr g / sqrt(s + eps), element-wise.
inline void rmsprop_step(ParameterStore& params, const Gradients& grads, OptimizerState& state) {
  if (grads.size() != params.size() || state.mean_square.size() != params.size()) {
    throw ShapeError("rmsprop_step: parameter, gradient and accumulator counts differ");
  }
  const double rho = state.decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params.at(i);
    Tensor& s = state.mean_square[i];
    require_same_shape(theta, s, "rmsprop_step");
    if (!grads.touched(i)) {
      for (auto& v : s.data()) v *= rho;
      continue;
    }
    const Tensor& g = grads.view(i);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      s[k] = rho * s[k] + (1.0 - rho) * g[k] * g[k];
      if (g[k] != 0.0) theta[k] -= state.learning_rate * g[k] / std::sqrt(s[k] + state.epsilon);
    }
  }
}

/// Inverted dropout on a vector. Rate 0 returns the input unchanged.
inline Tensor apply_dropout(const Tensor& v, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0,1)");
  if (rate == 0.0) return v;
  const Tensor m = graph::dropout_mask(v.size(), rate, rng);
  Tensor out = v;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= m[k];
  return out;
}

}  // namespace iarn
