#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

#include "iarn/data/interactions.hpp"
#include "iarn/error.hpp"

namespace iarn {

struct Step {
  std::uint32_t counterpart = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Step&, const Step&) = default;
  friend auto operator<=>(const Step& a, const Step& b) {
    if (a.timestamp != b.timestamp) return a.timestamp <=> b.timestamp;
    return a.counterpart <=> b.counterpart;
  }
};

/// Time-ordered counterpart history of one user (items rated) or one item (users who rated it).
struct EntitySequence {
  std::uint32_t owner = 0;
  std::vector<Step> steps;

  std::size_t length() const noexcept { return steps.size(); }
  friend bool operator==(const EntitySequence&, const EntitySequence&) = default;
};

struct SequenceSet {
  std::vector<EntitySequence> users;  // indexed by user
  std::vector<EntitySequence> items;  // indexed by item

  std::size_t user_length(std::uint32_t u) const { return u < users.size() ? users[u].length() : 0; }
  std::size_t item_length(std::uint32_t i) const { return i < items.size() ? items[i].length() : 0; }
};

/// Per-entity sequences sorted by (timestamp, counterpart index). Entities absent from `train`
/// get empty sequences.
inline SequenceSet build_sequences(const InteractionLog& train) {
  if (train.empty()) throw ContractError("build_sequences requires a nonempty training log");
  SequenceSet seqs;
  seqs.users.resize(train.users.size());
  seqs.items.resize(train.items.size());
  for (std::uint32_t u = 0; u < seqs.users.size(); ++u) seqs.users[u].owner = u;
  for (std::uint32_t i = 0; i < seqs.items.size(); ++i) seqs.items[i].owner = i;
  for (const auto& r : train.records) {
    seqs.users[r.user].steps.push_back({r.item, r.timestamp});
    seqs.items[r.item].steps.push_back({r.user, r.timestamp});
  }
  for (auto& s : seqs.users) std::sort(s.steps.begin(), s.steps.end());
  for (auto& s : seqs.items) std::sort(s.steps.begin(), s.steps.end());
  return seqs;
}

/// Test pairs whose user and item training sequences both have at least `min_length` steps.
inline InteractionLog min_length_filter(const SequenceSet& seqs, const InteractionLog& test, std::size_t min_length) {
  if (min_length < 1) throw ContractError("minimum sequence length must be at least 1");
  InteractionLog out;
  out.users = test.users;
  out.items = test.items;
  for (const auto& r : test.records) {
    if (seqs.user_length(r.user) >= min_length && seqs.item_length(r.item) >= min_length) out.records.push_back(r);
  }
  return out;
}

/// How a pair's input sequences are derived from the training history.
struct SequencePolicy {
  /// Keep only steps strictly earlier than the target timestamp.
  bool prefix_only = false;
  /// Keep at most this many most-recent steps; 0 disables the cap.
  std::size_t max_length = 0;

  friend bool operator==(const SequencePolicy&, const SequencePolicy&) = default;
};

/// `seq` with the step `exclude` (if any) removed once and the policy applied.
inline std::vector<Step> resolve_steps(const EntitySequence& seq, std::optional<Step> exclude,
                                       std::optional<std::int64_t> target_time, const SequencePolicy& policy) {
  std::vector<Step> out;
  out.reserve(seq.steps.size());
  bool removed = false;
  for (const Step& s : seq.steps) {
    if (!removed && exclude && s == *exclude) {
      removed = true;
      continue;
    }
    if (policy.prefix_only && target_time && s.timestamp >= *target_time) continue;
    out.push_back(s);
  }
  if (policy.max_length > 0 && out.size() > policy.max_length) {
    out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(policy.max_length));
  }
  return out;
}

}  // namespace iarn
