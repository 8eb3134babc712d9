#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "iarn/data/sequences.hpp"
#include "iarn/model/network.hpp"

namespace iarn {

/// Scores user-item pairs against fixed training sequences.
///
/// Pairs scored through predict(user, item) use each entity's whole training history; the
/// per-entity part of the network (encoded inputs, bi-directional summaries, and for backbones
/// without interacting attention the full representation) is computed once and reused. Caches
/// fill lazily, so a Predictor must not be shared across threads while it is still warming up.
class Predictor {
 public:
  Predictor(const Model& model, const SequenceSet& sequences, SequencePolicy policy = {}, bool use_cache = true)
      : model_(&model), seqs_(&sequences), policy_(policy), use_cache_(use_cache) {
    user_cache_.resize(model.shape().num_users);
    item_cache_.resize(model.shape().num_items);
  }

  const Model& model() const noexcept { return *model_; }
  const SequenceSet& sequences() const noexcept { return *seqs_; }

  /// Rating estimate for (user, item) from full training histories.
  double predict(std::uint32_t user, std::uint32_t item) const {
    check_ids(user, item);
    if (!use_cache_) {
      const auto us = steps_for(Side::user, user, std::nullopt, std::nullopt);
      const auto is = steps_for(Side::item, item, std::nullopt, std::nullopt);
      Tape tape(model_->parameters().store());
      return tape.scalar(graph::build_pair(tape, *model_, user, item, us, is).prediction);
    }
    const SideCache& uc = cache(Side::user, user);
    const SideCache& ic = cache(Side::item, item);
    Tape tape(model_->parameters().store());
    if (uc.representation && ic.representation) {
      return tape.scalar(tape.dot(tape.constant(*uc.representation), tape.constant(*ic.representation)));
    }
    return tape.scalar(
        graph::complete_pair(tape, *model_, from_cache(tape, uc), from_cache(tape, ic)).prediction);
  }

  /// Rating estimate for the pair of `target`. With `exclude_target` the interaction itself is removed
  /// from both sequences, as during training.
  double predict(const Interaction& target, bool exclude_target) const {
    check_ids(target.user, target.item);
    Tape tape(model_->parameters().store());
    return tape.scalar(build(tape, target, exclude_target, {}).prediction);
  }

  /// Builds the full pair graph on `tape` for training or inspection.
  graph::PairGraph build(Tape& tape, const Interaction& target, bool exclude_target,
                         const ForwardOptions& opts) const {
    check_ids(target.user, target.item);
    std::optional<Step> ux, ix;
    if (exclude_target) {
      ux = Step{target.item, target.timestamp};
      ix = Step{target.user, target.timestamp};
    }
    const auto us = steps_for(Side::user, target.user, ux, target.timestamp);
    const auto is = steps_for(Side::item, target.item, ix, target.timestamp);
    return graph::build_pair(tape, *model_, target.user, target.item, us, is, opts);
  }

  /// The attention scores predict(user, item) gates with, one trace per side.
  std::pair<AttentionTrace, AttentionTrace> attention_trace(std::uint32_t user, std::uint32_t item) const {
    check_ids(user, item);
    if (!uses_attention(model_->backbone())) throw ContractError("backbone has no attention gates");
    const auto us = steps_for(Side::user, user, std::nullopt, std::nullopt);
    const auto is = steps_for(Side::item, item, std::nullopt, std::nullopt);
    Tape tape(model_->parameters().store());
    graph::PairGraph pg;
    if (use_cache_) {
      pg = graph::complete_pair(tape, *model_, from_cache(tape, cache(Side::user, user)),
                                from_cache(tape, cache(Side::item, item)));
    } else {
      pg = graph::build_pair(tape, *model_, user, item, us, is);
    }
    AttentionTrace ut{Side::user, user, {}, us};
    AttentionTrace it{Side::item, item, {}, is};
    for (Var a : pg.user.scores) ut.scores.push_back(tape.scalar(a));
    for (Var a : pg.item.scores) it.scores.push_back(tape.scalar(a));
    return {std::move(ut), std::move(it)};
  }

  /// True when both entities have a nonempty full-history sequence.
  bool scorable(std::uint32_t user, std::uint32_t item) const {
    return user < model_->shape().num_users && item < model_->shape().num_items && seqs_->user_length(user) > 0 &&
           seqs_->item_length(item) > 0;
  }

 private:
  struct SideCache {
    Side side = Side::user;
    Tensor inputs;  // T x d
    BiSummary summary;
    std::optional<Tensor> representation;
  };

  void check_ids(std::uint32_t user, std::uint32_t item) const {
    if (user >= model_->shape().num_users) throw LookupError("unknown user index " + std::to_string(user));
    if (item >= model_->shape().num_items) throw LookupError("unknown item index " + std::to_string(item));
  }

  std::vector<Step> steps_for(Side side, std::uint32_t owner, std::optional<Step> exclude,
                              std::optional<std::int64_t> target_time) const {
    const auto& list = side == Side::user ? seqs_->users : seqs_->items;
    if (owner >= list.size()) {
      throw ColdStartError(std::string(to_string(side)) + " " + std::to_string(owner) + " has no training history");
    }
    auto steps = resolve_steps(list[owner], exclude, target_time, policy_);
    if (steps.empty()) {
      throw ColdStartError(std::string(to_string(side)) + " " + std::to_string(owner) +
                           " has an empty input sequence");
    }
    return steps;
  }

  const SideCache& cache(Side side, std::uint32_t owner) const {
    auto& slot = (side == Side::user ? user_cache_ : item_cache_)[owner];
    if (slot) return *slot;
    const auto steps = steps_for(side, owner, std::nullopt, std::nullopt);
    Tape tape(model_->parameters().store());
    const auto g = graph::begin_side(tape, *model_, side, owner, steps);
    SideCache c;
    c.side = side;
    c.inputs = detail::stack_rows(tape, g.inputs);
    if (uses_attention(model_->backbone())) {
      c.summary = {detail::stack_rows(tape, g.summary.forward), detail::stack_rows(tape, g.summary.backward)};
    }
    if (!is_interacting(model_->backbone())) {
      // Representation does not depend on the paired entity.
      Tape rep_tape(model_->parameters().store());
      graph::SideGraph self = from_cache(rep_tape, c);
      graph::finish_side(rep_tape, *model_, self, self, {});
      c.representation = rep_tape.value(self.representation);
    }
    slot = std::move(c);
    return *slot;
  }

  static graph::SideGraph from_cache(Tape& tape, const SideCache& c) {
    graph::SideGraph g;
    g.side = c.side;
    g.inputs = detail::unstack_rows(tape, c.inputs);
    if (!c.summary.forward_states.empty()) {
      g.summary.forward = detail::unstack_rows(tape, c.summary.forward_states);
      g.summary.backward = detail::unstack_rows(tape, c.summary.backward_states);
    }
    return g;
  }

  const Model* model_;
  const SequenceSet* seqs_;
  SequencePolicy policy_;
  bool use_cache_;
  mutable std::vector<std::optional<SideCache>> user_cache_, item_cache_;
};

/// Rating estimate for one pair using full training histories.
inline double predict(const Model& model, const SequenceSet& sequences, std::uint32_t user, std::uint32_t item) {
  return Predictor(model, sequences, {}, false).predict(user, item);
}

inline std::pair<AttentionTrace, AttentionTrace> attention_trace(const Model& model, const SequenceSet& sequences,
                                                                 std::uint32_t user, std::uint32_t item) {
  return Predictor(model, sequences, {}, false).attention_trace(user, item);
}

}  // namespace iarn
