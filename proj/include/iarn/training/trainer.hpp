#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "iarn/data/interactions.hpp"
#include "iarn/data/sequences.hpp"
#include "iarn/error.hpp"
#include "iarn/model/predictor.hpp"
#include "iarn/training/optimizer.hpp"

namespace iarn {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 50;
  double learning_rate = 1e-3;
  double dropout = 0.0;
  double clip = 10.0;
  std::uint64_t seed = 7;
  double rho = 0.9;
  double epsilon = 1e-8;
  SequencePolicy policy;

  void validate() const {
    if (batch_size < 1) throw ContractError("batch size must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout rate must lie in [0,1)");
    if (!(clip > 0.0)) throw ContractError("clip bound must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning rate must be >= 0");
    if (!(rho >= 0.0 && rho < 1.0)) throw ContractError("rmsprop decay must lie in [0,1)");
    if (!(epsilon >= 0.0)) throw ContractError("rmsprop epsilon must be >= 0");
  }
};

struct TrainResult {
  std::vector<double> loss_history;  // mean training squared error per epoch
  std::size_t instances = 0;
  std::size_t skipped_cold_start = 0;
  std::size_t optimizer_steps = 0;
};

/// Mean-gradient and squared-error sum of one mini-batch, without touching the model.
struct BatchGradient {
  Gradients gradient;
  double squared_error_sum = 0.0;
};

inline BatchGradient batch_gradient(const Predictor& predictor, const InteractionLog& train,
                                    std::span<const std::size_t> batch, const ForwardOptions& opts) {
  const auto& store = predictor.model().parameters().store();
  BatchGradient out{Gradients(store), 0.0};
  for (std::size_t idx : batch) {
    const Interaction& r = train.records[idx];
    Tape tape(store);
    const auto pg = predictor.build(tape, r, true, opts);
    const Var loss = tape.squared_error(pg.prediction, r.rating);
    out.squared_error_sum += tape.scalar(loss);
    out.gradient.add_scaled(tape.backward(loss), 1.0);
  }
  out.gradient.scale(1.0 / static_cast<double>(batch.size()));
  return out;
}

/// Fits `model` to `train` by mini-batch RMSprop on the squared rating error. Each instance
/// excludes its own interaction from the user and item sequences. Instances whose sequences are
/// empty after exclusion are skipped and counted.
inline TrainResult train(Model& model, const InteractionLog& train, const SequenceSet& sequences,
                         const TrainConfig& config,
                         const std::function<void(std::size_t, double)>& on_epoch = {}) {
  config.validate();
  Predictor predictor(model, sequences, config.policy, false);

  TrainResult result;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    const Interaction& r = train.records[i];
    if (r.user >= sequences.users.size() || r.item >= sequences.items.size()) {
      ++result.skipped_cold_start;
      continue;
    }
    const auto us = resolve_steps(sequences.users[r.user], Step{r.item, r.timestamp}, r.timestamp, config.policy);
    const auto is = resolve_steps(sequences.items[r.item], Step{r.user, r.timestamp}, r.timestamp, config.policy);
    if (us.empty() || is.empty()) {
      ++result.skipped_cold_start;
      continue;
    }
    usable.push_back(i);
  }
  if (usable.empty()) throw ContractError("no trainable instances: every pair is cold-start after target exclusion");
  result.instances = usable.size();

  OptimizerState state(model.parameters().store(), config.learning_rate, config.rho, config.epsilon);
  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  ForwardOptions opts;
  opts.dropout = config.dropout;
  opts.rng = &dropout_rng;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_error = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      auto bg = batch_gradient(predictor, train, batch, opts);
      if (!std::isfinite(bg.squared_error_sum)) {
        throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(batch_no + 1));
      }
      epoch_error += bg.squared_error_sum;
      clip_gradients(bg.gradient, config.clip);
      rmsprop_step(model.parameters().store(), bg.gradient, state);
      ++result.optimizer_steps;
    }
    const double mean = epoch_error / static_cast<double>(order.size());
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

}  // namespace iarn
