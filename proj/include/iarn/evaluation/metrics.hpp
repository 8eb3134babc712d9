#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "iarn/data/interactions.hpp"
#include "iarn/data/sequences.hpp"
#include "iarn/error.hpp"
#include "iarn/model/predictor.hpp"
#include "iarn/training/optimizer.hpp"

namespace iarn {

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty() || targets.empty()) throw ContractError("rmse of an empty set");
  return std::sqrt(mse_loss(predictions, targets));
}

/// Fraction of (positive, negative) pairs ranked correctly; ties count one half.
inline double pairwise_auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) throw ContractError("AUC needs positives and negatives");
  double wins = 0.0;
  for (double p : positive_scores) {
    for (double n : negative_scores) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(positive_scores.size()) * static_cast<double>(negative_scores.size()));
}

struct AucProtocol {
  double pos_threshold = 4.0;
  std::size_t n_negatives = 100;
  std::uint64_t seed = 7;
};

/// Mean per-user AUC. For each user, positives are distinct test items rated at least
/// `pos_threshold`; negatives are up to `n_negatives` items drawn without replacement from the
/// items the user never interacted with in train or test. Only entities with training history are
/// scored. `score(user, item)` must be deterministic.
template <typename Scorer>
double auc(const Scorer& score, const InteractionLog& test, const SequenceSet& sequences, const AucProtocol& protocol) {
  const std::size_t num_users = std::max(test.users.size(), sequences.users.size());
  const std::size_t num_items = std::max(test.items.size(), sequences.items.size());
  std::vector<std::vector<std::uint32_t>> positives(num_users), touched(num_users);
  for (const auto& r : test.records) {
    touched[r.user].push_back(r.item);
    if (r.rating >= protocol.pos_threshold) positives[r.user].push_back(r.item);
  }
  std::mt19937_64 rng(protocol.seed);
  double total = 0.0;
  std::size_t qualifying = 0;
  for (std::uint32_t u = 0; u < num_users; ++u) {
    if (positives[u].empty() || sequences.user_length(u) == 0) continue;
    auto& pos = positives[u];
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    std::erase_if(pos, [&](std::uint32_t i) { return sequences.item_length(i) == 0; });
    if (pos.empty()) continue;

    std::vector<bool> seen(num_items, false);
    for (auto i : touched[u]) seen[i] = true;
    for (const Step& s : sequences.users[u].steps) seen[s.counterpart] = true;
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 0; i < num_items; ++i) {
      if (!seen[i] && sequences.item_length(i) > 0) pool.push_back(i);
    }
    if (pool.empty()) continue;
    const std::size_t k = std::min(protocol.n_negatives, pool.size());
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng)]);
    }
    pool.resize(k);

    std::vector<double> ps, ns;
    for (auto i : pos) ps.push_back(score(u, i));
    for (auto i : pool) ns.push_back(score(u, i));
    total += pairwise_auc(ps, ns);
    ++qualifying;
  }
  if (qualifying == 0) throw ProtocolError("AUC: no user has a scorable positive test item and a negative candidate");
  return total / static_cast<double>(qualifying);
}

struct SweepEntry {
  std::size_t min_length = 0;
  std::optional<double> rmse;  // absent when the restricted test set is empty
  std::size_t n_pairs = 0;
  std::size_t n_skipped = 0;
};

struct EvalReport {
  double rmse = 0.0;
  std::optional<double> auc;
  std::size_t n_pairs = 0;
  std::size_t n_skipped_cold_start = 0;
  std::vector<SweepEntry> sweep;
};

/// RMSE over the test pairs whose user and item both have training history; the rest are counted
/// as cold-start and skipped.
inline EvalReport evaluate_rmse(const Predictor& predictor, const InteractionLog& test) {
  EvalReport report;
  std::vector<double> preds, targets;
  for (const auto& r : test.records) {
    if (!predictor.scorable(r.user, r.item)) {
      ++report.n_skipped_cold_start;
      continue;
    }
    preds.push_back(predictor.predict(r.user, r.item));
    targets.push_back(r.rating);
  }
  report.n_pairs = preds.size();
  if (!preds.empty()) report.rmse = rmse(preds, targets);
  return report;
}

/// Training-set RMSE with each pair's own interaction excluded from its sequences, no dropout.
inline double training_rmse(const Predictor& predictor, const InteractionLog& train) {
  std::vector<double> preds, targets;
  for (const auto& r : train.records) {
    try {
      preds.push_back(predictor.predict(r, true));
      targets.push_back(r.rating);
    } catch (const ColdStartError&) {
    }
  }
  return rmse(preds, targets);
}

}  // namespace iarn
