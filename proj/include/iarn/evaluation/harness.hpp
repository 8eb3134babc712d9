#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "iarn/data/interactions.hpp"
#include "iarn/data/sequences.hpp"
#include "iarn/error.hpp"
#include "iarn/evaluation/metrics.hpp"
#include "iarn/model/predictor.hpp"

namespace iarn {

/// Rating estimate for a test pair, or nothing when the trained model cannot score it.
using PairScorer = std::function<std::optional<double>(std::uint32_t user, std::uint32_t item)>;

/// Trains a model for one grid point. Receives the minimum length and the training interactions
/// whose user and item both meet it; returns a scorer for test pairs.
using ScorerFactory = std::function<PairScorer(std::size_t min_length, const InteractionLog& restricted_train)>;

/// Training interactions whose user and item sequences both have at least `min_length` steps.
inline InteractionLog restrict_training(const SequenceSet& sequences, const InteractionLog& train,
                                        std::size_t min_length) {
  return min_length_filter(sequences, train, min_length);
}

/// For each minimum length in `grid`, restricts train and test to entities whose training sequences
/// are at least that long, trains through `factory`, and records the restricted-test RMSE.
/// Points with an empty restricted test (or train) set get an absent entry. Test pairs the
/// scorer declines are counted in `n_skipped`.
inline EvalReport sweep_min_length(const ScorerFactory& factory, const InteractionLog& train,
                                   const InteractionLog& test, const SequenceSet& sequences,
                                   const std::vector<std::size_t>& grid) {
  if (grid.empty()) throw ContractError("minimum-length grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 1) throw ContractError("minimum lengths must be at least 1");
    if (i > 0 && grid[i] <= grid[i - 1]) throw ContractError("minimum-length grid must be strictly ascending");
  }
  EvalReport report;
  for (std::size_t L : grid) {
    SweepEntry entry;
    entry.min_length = L;
    const InteractionLog restricted_test = min_length_filter(sequences, test, L);
    const InteractionLog restricted_train = restrict_training(sequences, train, L);
    if (!restricted_test.empty() && !restricted_train.empty()) {
      const PairScorer score = factory(L, restricted_train);
      std::vector<double> preds, targets;
      for (const auto& r : restricted_test.records) {
        const auto p = score(r.user, r.item);
        if (!p) {
          ++entry.n_skipped;
          continue;
        }
        preds.push_back(*p);
        targets.push_back(r.rating);
      }
      if (!preds.empty()) entry.rmse = rmse(preds, targets);
      entry.n_pairs = preds.size();
    }
    report.sweep.push_back(entry);
  }
  return report;
}

/// The schema grid used for the minimum-length experiment.
inline const std::vector<std::size_t>& default_min_length_grid() {
  static const std::vector<std::size_t> grid{3, 10, 20, 30, 50, 100};
  return grid;
}

// ---------------------------------------------------------------------------
// Attention export

struct AttentionRecord {
  std::string user_id;
  std::string item_id;
  Side side = Side::user;
  std::size_t step = 0;  // 1-based
  std::string counterpart_id;
  std::int64_t timestamp = 0;
  double score = 0.0;
};

struct SkippedPair {
  std::string user_id;
  std::string item_id;
  std::string reason;
};

struct AttentionExport {
  std::vector<AttentionRecord> records;
  std::vector<SkippedPair> skipped;
};

/// One record per time step per side for each (user token, item token) pair. Pairs that cannot be
/// scored are reported in `skipped` with a reason.
inline AttentionExport collect_attention(const Predictor& predictor, const EntityIndex& users, const EntityIndex& items,
                                         const std::vector<std::pair<std::string, std::string>>& pairs) {
  AttentionExport out;
  for (const auto& [ut, it] : pairs) {
    const auto u = users.find(ut);
    const auto i = items.find(it);
    if (!u) {
      out.skipped.push_back({ut, it, "unknown user"});
      continue;
    }
    if (!i) {
      out.skipped.push_back({ut, it, "unknown item"});
      continue;
    }
    std::pair<AttentionTrace, AttentionTrace> traces;
    try {
      traces = predictor.attention_trace(*u, *i);
    } catch (const ColdStartError& e) {
      out.skipped.push_back({ut, it, std::string("cold-start: ") + e.what()});
      continue;
    }
    for (const AttentionTrace* tr : {&traces.first, &traces.second}) {
      const EntityIndex& counterparts = tr->side == Side::user ? items : users;
      for (std::size_t t = 0; t < tr->scores.size(); ++t) {
        out.records.push_back({ut, it, tr->side, t + 1, counterparts.token(tr->steps[t].counterpart),
                               tr->steps[t].timestamp, tr->scores[t]});
      }
    }
  }
  return out;
}

/// Newline-delimited JSON objects; skipped pairs become objects carrying a `reason` field.
inline void write_attention_ndjson(const AttentionExport& ex, std::ostream& out) {
  for (const auto& r : ex.records) {
    nlohmann::ordered_json j;
    j["user_id"] = r.user_id;
    j["item_id"] = r.item_id;
    j["side"] = std::string(to_string(r.side));
    j["step"] = r.step;
    j["counterpart_id"] = r.counterpart_id;
    j["timestamp"] = r.timestamp;
    j["score"] = r.score;
    out << j.dump() << '\n';
  }
  for (const auto& s : ex.skipped) {
    nlohmann::ordered_json j;
    j["user_id"] = s.user_id;
    j["item_id"] = s.item_id;
    j["reason"] = s.reason;
    out << j.dump() << '\n';
  }
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}
}  // namespace detail

/// Same columns as the NDJSON export, one row per record; skipped pairs are omitted.
inline void write_attention_csv(const AttentionExport& ex, std::ostream& out) {
  out << "user_id,item_id,side,step,counterpart_id,timestamp,score\n";
  for (const auto& r : ex.records) {
    out << detail::csv_field(r.user_id) << ',' << detail::csv_field(r.item_id) << ',' << to_string(r.side) << ','
        << r.step << ',' << detail::csv_field(r.counterpart_id) << ',' << r.timestamp << ','
        << nlohmann::json(r.score).dump() << '\n';
  }
}

}  // namespace iarn
