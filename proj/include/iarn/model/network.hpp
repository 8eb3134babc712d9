#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "iarn/data/sequences.hpp"
#include "iarn/data/taxonomy.hpp"
#include "iarn/error.hpp"
#include "iarn/model/parameters.hpp"
#include "iarn/numerics/tape.hpp"

namespace iarn {

/// Feature-matrix chains the item-side encoder applies to each input step of an item's sequence.
/// Every chain is stored in application order (root feature first, leaf last); the encoded input is
/// the sum of the chain outputs. Items without chains pass their inputs through unchanged.
class EncoderPlan {
 public:
  EncoderPlan() = default;

  EncoderPlan(const FeatureTaxonomy& taxonomy, EncoderMode mode, std::size_t num_items)
      : mode_(mode), chains_(num_items) {
    if (mode == EncoderMode::none) return;
    for (std::uint32_t item = 0; item < num_items; ++item) {
      auto& out = chains_[item];
      if (mode == EncoderMode::hierarchical) {
        for (auto leaf : taxonomy.features_of(item)) out.push_back(taxonomy.root_path(leaf));
      } else {
        // Flat: every feature on the item's root paths contributes one additive term.
        std::vector<std::uint32_t> seen;
        for (auto leaf : taxonomy.features_of(item)) {
          for (auto f : taxonomy.root_path(leaf)) {
            if (std::find(seen.begin(), seen.end(), f) == seen.end()) seen.push_back(f);
          }
        }
        for (auto f : seen) out.push_back({f});
      }
    }
  }

  EncoderMode mode() const noexcept { return mode_; }

  const std::vector<std::vector<std::uint32_t>>& chains(std::uint32_t item) const {
    static const std::vector<std::vector<std::uint32_t>> none;
    return item < chains_.size() ? chains_[item] : none;
  }

 private:
  EncoderMode mode_ = EncoderMode::none;
  std::vector<std::vector<std::vector<std::uint32_t>>> chains_;
};

/// Parameters plus the encoder plan derived from the item taxonomy.
class Model {
 public:
  Model(ModelParameters params, EncoderPlan plan) : params_(std::move(params)), plan_(std::move(plan)) {
    if (params_.shape().encoder != plan_.mode()) throw ContractError("encoder plan mode does not match model shape");
  }

  static EncoderPlan plan_for(const ModelShape& shape, const FeatureTaxonomy* taxonomy) {
    if (shape.encoder == EncoderMode::none) return {};
    if (!taxonomy) throw ContractError("feature encoder requested without a taxonomy");
    if (taxonomy->feature_count() != shape.num_features) {
      throw ShapeError("taxonomy has " + std::to_string(taxonomy->feature_count()) + " features, model expects " +
                       std::to_string(shape.num_features));
    }
    return EncoderPlan(*taxonomy, shape.encoder, shape.num_items);
  }

  static Model create(const ModelShape& shape, const FeatureTaxonomy* taxonomy, std::uint64_t seed) {
    return Model(ModelParameters::initialize(shape, seed), plan_for(shape, taxonomy));
  }

  const ModelShape& shape() const noexcept { return params_.shape(); }
  Backbone backbone() const noexcept { return params_.shape().backbone; }
  ModelParameters& parameters() noexcept { return params_; }
  const ModelParameters& parameters() const noexcept { return params_; }
  const EncoderPlan& encoder() const noexcept { return plan_; }

 private:
  ModelParameters params_;
  EncoderPlan plan_;
};

/// Options that only matter while training.
struct ForwardOptions {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Tape-level building blocks. Every function appends nodes to `tape` and returns handles.
namespace graph {

inline Var encode_item(Tape& tape, const Model& model, std::uint32_t item, Var x) {
  const auto& chains = model.encoder().chains(item);
  if (chains.empty()) return x;
  std::vector<Var> terms;
  terms.reserve(chains.size());
  for (const auto& chain : chains) {
    Var y = x;
    for (auto f : chain) y = tape.matvec(tape.parameter(model.parameters().feature_matrix(f)), y);
    terms.push_back(y);
  }
  return terms.size() == 1 ? terms.front() : tape.sum(terms);
}

/// E(x_t) for every step of `owner`'s sequence on the given side.
inline std::vector<Var> side_inputs(Tape& tape, const Model& model, Side side, std::uint32_t owner,
                                    std::span<const Step> steps) {
  const ParamId table = model.parameters().side(side).embeddings;
  const std::size_t rows = model.parameters()[table].rows();
  std::vector<Var> out;
  out.reserve(steps.size());
  for (const Step& s : steps) {
    if (s.counterpart >= rows) throw LookupError("counterpart index " + std::to_string(s.counterpart) + " out of range");
    Var x = tape.row(table, s.counterpart);
    out.push_back(side == Side::item ? encode_item(tape, model, owner, x) : x);
  }
  return out;
}

struct BiSummaryVars {
  std::vector<Var> forward;
  std::vector<Var> backward;
};

inline BiSummaryVars bi_summaries(Tape& tape, const SideParams& sp, std::span<const Var> inputs) {
  if (inputs.empty()) throw ContractError("bi-directional summary of an empty sequence");
  const std::size_t T = inputs.size();
  BiSummaryVars out;
  out.forward.resize(T);
  out.backward.resize(T);
  const Var fW = tape.parameter(sp.fwd_W), fH = tape.parameter(sp.fwd_H), fb = tape.parameter(sp.fwd_b);
  const Var bW = tape.parameter(sp.bwd_W), bH = tape.parameter(sp.bwd_H), bb = tape.parameter(sp.bwd_b);
  for (std::size_t t = 0; t < T; ++t) {
    Var pre = t == 0 ? tape.affine(fW, inputs[t], fb) : tape.affine(fW, inputs[t], fH, out.forward[t - 1], fb);
    out.forward[t] = tape.relu(pre);
  }
  for (std::size_t t = T; t-- > 0;) {
    Var pre = t == T - 1 ? tape.affine(bW, inputs[t], bb) : tape.affine(bW, inputs[t], bH, out.backward[t + 1], bb);
    out.backward[t] = tape.relu(pre);
  }
  return out;
}

/// sigma(M^T tanh(L [own_fwd; own_bwd; other_fwd; other_bwd] + b')), a length-1 node.
inline Var attention_score(Tape& tape, const SideParams& sp, Var own_fwd, Var own_bwd, Var other_fwd, Var other_bwd) {
  const Var fused = tape.concat({own_fwd, own_bwd, other_fwd, other_bwd});
  const Var hidden = tape.tanh(tape.affine(tape.parameter(sp.att_L), fused, tape.parameter(sp.att_b)));
  return tape.sigmoid(tape.dot(tape.parameter(sp.att_M), hidden));
}

struct RecurrenceVars {
  std::vector<Var> states;      // u_1 .. u_T
  std::vector<Var> candidates;  // u'_1 .. u'_T (attention-gated recurrence only)
  Var final;
};

inline void check_score(double a, std::size_t t) {
  if (!(a >= 0.0 && a <= 1.0)) {
    throw ContractError("attention score " + std::to_string(a) + " at step " + std::to_string(t + 1) +
                        " is outside [0,1]");
  }
}

/// u_t = (1 - a_t) u_{t-1} + a_t relu(W u_{t-1} + H x_t + b), u_0 = 0.
inline RecurrenceVars gated_recurrence(Tape& tape, const SideParams& sp, std::span<const Var> inputs,
                                       std::span<const Var> scores, std::size_t hidden) {
  if (inputs.empty()) throw ContractError("recurrence over an empty sequence");
  if (scores.size() != inputs.size()) {
    throw ContractError("got " + std::to_string(scores.size()) + " attention scores for " +
                        std::to_string(inputs.size()) + " steps");
  }
  const Var W = tape.parameter(sp.rec_W), H = tape.parameter(sp.rec_H), b = tape.parameter(sp.rec_b);
  RecurrenceVars out;
  Var prev = tape.constant(Tensor::vector(hidden));
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    check_score(tape.scalar(scores[t]), t);
    Var pre = t == 0 ? tape.affine(H, inputs[t], b) : tape.affine(W, prev, H, inputs[t], b);
    Var cand = tape.relu(pre);
    prev = tape.blend(prev, cand, scores[t]);
    out.candidates.push_back(cand);
    out.states.push_back(prev);
  }
  out.final = prev;
  return out;
}

/// Ungated u_t = relu(W u_{t-1} + H x_t + b).
inline RecurrenceVars plain_recurrence(Tape& tape, const SideParams& sp, std::span<const Var> inputs) {
  if (inputs.empty()) throw ContractError("recurrence over an empty sequence");
  const Var W = tape.parameter(sp.rec_W), H = tape.parameter(sp.rec_H), b = tape.parameter(sp.rec_b);
  RecurrenceVars out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var pre = t == 0 ? tape.affine(H, inputs[t], b) : tape.affine(W, out.states.back(), H, inputs[t], b);
    out.states.push_back(tape.relu(pre));
  }
  out.final = out.states.back();
  return out;
}

/// Standard LSTM cell; `states` holds the hidden outputs.
inline RecurrenceVars lstm_recurrence(Tape& tape, const SideParams& sp, std::span<const Var> inputs) {
  if (inputs.empty()) throw ContractError("recurrence over an empty sequence");
  enum { input_gate, forget_gate, output_gate, cell_gate };
  std::array<Var, 4> W, H, b;
  for (std::size_t g = 0; g < 4; ++g) {
    W[g] = tape.parameter(sp.lstm_W[g]);
    H[g] = tape.parameter(sp.lstm_H[g]);
    b[g] = tape.parameter(sp.lstm_b[g]);
  }
  RecurrenceVars out;
  Var cell;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto pre = [&](int g) {
      return t == 0 ? tape.affine(H[g], inputs[t], b[g]) : tape.affine(W[g], out.states.back(), H[g], inputs[t], b[g]);
    };
    const Var i = tape.sigmoid(pre(input_gate));
    const Var o = tape.sigmoid(pre(output_gate));
    const Var c_hat = tape.tanh(pre(cell_gate));
    if (t == 0) {
      cell = tape.mul(i, c_hat);
    } else {
      const Var f = tape.sigmoid(pre(forget_gate));
      cell = tape.add(tape.mul(f, cell), tape.mul(i, c_hat));
    }
    out.states.push_back(tape.mul(o, tape.tanh(cell)));
  }
  out.final = out.states.back();
  return out;
}

/// prelu(W~ h + b~) with the side's learnable slope.
inline Var project(Tape& tape, const SideParams& sp, Var h) {
  const Var pre = tape.affine(tape.parameter(sp.proj_W), h, tape.parameter(sp.proj_b));
  return tape.prelu(pre, tape.parameter(sp.proj_alpha));
}

/// Inverted dropout: zero each element with probability `rate`, scale survivors by 1/(1-rate).
inline Tensor dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
  Tensor m = Tensor::vector(n);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (auto& v : m.data()) v = keep(rng) ? scale : 0.0;
  return m;
}

/// One side of a pair. `inputs` and `summary` may come from the tape or from cached constants.
struct SideGraph {
  Side side = Side::user;
  std::vector<Var> inputs;
  BiSummaryVars summary;
  std::vector<Var> scores;
  RecurrenceVars recurrence;
  Var representation;
};

inline SideGraph begin_side(Tape& tape, const Model& model, Side side, std::uint32_t owner,
                            std::span<const Step> steps) {
  SideGraph g;
  g.side = side;
  g.inputs = side_inputs(tape, model, side, owner, steps);
  if (uses_attention(model.backbone())) g.summary = bi_summaries(tape, model.parameters().side(side), g.inputs);
  return g;
}

/// Runs attention, recurrence, and projection for `self`, reading `other`'s whole-sequence summaries
/// when the backbone is interacting.
inline void finish_side(Tape& tape, const Model& model, SideGraph& self, const SideGraph& other,
                        const ForwardOptions& opts) {
  const SideParams& sp = model.parameters().side(self.side);
  const Backbone bb = model.backbone();
  const std::size_t h = model.shape().hidden_dim;
  if (bb == Backbone::rnn) {
    self.recurrence = plain_recurrence(tape, sp, self.inputs);
  } else if (bb == Backbone::lstm) {
    self.recurrence = lstm_recurrence(tape, sp, self.inputs);
  } else {
    Var other_fwd, other_bwd;
    if (is_interacting(bb)) {
      other_fwd = other.summary.forward.back();
      other_bwd = other.summary.backward.front();
    } else {
      other_fwd = other_bwd = tape.constant(Tensor::vector(h));
    }
    self.scores.clear();
    for (std::size_t t = 0; t < self.inputs.size(); ++t) {
      self.scores.push_back(
          attention_score(tape, sp, self.summary.forward[t], self.summary.backward[t], other_fwd, other_bwd));
    }
    self.recurrence = gated_recurrence(tape, sp, self.inputs, self.scores, h);
  }
  Var top = self.recurrence.final;
  if (opts.dropout > 0.0) {
    if (!opts.rng) throw ContractError("dropout requires a random generator");
    top = tape.mask(top, dropout_mask(h, opts.dropout, *opts.rng));
  }
  self.representation = project(tape, sp, top);
}

struct PairGraph {
  SideGraph user;
  SideGraph item;
  Var prediction;
};

/// <u~_i, v~_j> given both sides' partially built graphs.
inline PairGraph complete_pair(Tape& tape, const Model& model, SideGraph user, SideGraph item,
                               const ForwardOptions& opts = {}) {
  PairGraph pg{std::move(user), std::move(item), {}};
  finish_side(tape, model, pg.user, pg.item, opts);
  finish_side(tape, model, pg.item, pg.user, opts);
  pg.prediction = tape.dot(pg.user.representation, pg.item.representation);
  return pg;
}

inline PairGraph build_pair(Tape& tape, const Model& model, std::uint32_t user, std::uint32_t item,
                            std::span<const Step> user_steps, std::span<const Step> item_steps,
                            const ForwardOptions& opts = {}) {
  if (user_steps.empty()) throw ColdStartError("user " + std::to_string(user) + " has an empty input sequence");
  if (item_steps.empty()) throw ColdStartError("item " + std::to_string(item) + " has an empty input sequence");
  SideGraph u = begin_side(tape, model, Side::user, user, user_steps);
  SideGraph v = begin_side(tape, model, Side::item, item, item_steps);
  return complete_pair(tape, model, std::move(u), std::move(v), opts);
}

}  // namespace graph

// ---------------------------------------------------------------------------
// Value-level operations

struct BiSummary {
  Tensor forward_states;   // T x h
  Tensor backward_states;  // T x h

  std::size_t length() const noexcept { return forward_states.rows(); }
  Tensor forward_at(std::size_t t) const { return row_of(forward_states, t); }
  Tensor backward_at(std::size_t t) const { return row_of(backward_states, t); }

  static Tensor row_of(const Tensor& m, std::size_t t) {
    Tensor v = Tensor::vector(m.cols());
    std::copy(m.row(t).begin(), m.row(t).end(), v.data().begin());
    return v;
  }
};

struct AttentionTrace {
  Side side = Side::user;
  std::uint32_t owner = 0;
  std::vector<double> scores;
  std::vector<Step> steps;

  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;
};

namespace detail {

inline Tensor stack_rows(const Tape& tape, std::span<const Var> rows) {
  const std::size_t cols = tape.value(rows.front()).size();
  Tensor m = Tensor::matrix(rows.size(), cols);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const Tensor& v = tape.value(rows[t]);
    std::copy(v.data().begin(), v.data().end(), m.row(t).begin());
  }
  return m;
}

inline std::vector<Var> unstack_rows(Tape& tape, const Tensor& m) {
  std::vector<Var> out;
  out.reserve(m.rows());
  for (std::size_t t = 0; t < m.rows(); ++t) out.push_back(tape.constant(BiSummary::row_of(m, t)));
  return out;
}

}  // namespace detail

/// Encoded input for one step of `item`'s sequence.
inline Tensor encode_item_input(const Model& model, std::uint32_t item, const Tensor& x) {
  if (x.rank() != 1 || x.size() != model.shape().embed_dim) {
    throw ShapeError("encoder input has shape " + shape_string(x.shape()) + ", expected [" +
                     std::to_string(model.shape().embed_dim) + "]");
  }
  Tape tape(model.parameters().store());
  return tape.value(graph::encode_item(tape, model, item, tape.constant(x)));
}

/// User-side inputs are not transformed.
inline Tensor encode_user_input(const Tensor& x) { return x; }

inline BiSummary bi_summaries(const Model& model, Side side, const EntitySequence& seq) {
  if (!uses_attention(model.backbone())) throw ContractError("backbone has no bi-directional summary layers");
  if (seq.steps.empty()) throw ContractError("bi-directional summary of an empty sequence");
  Tape tape(model.parameters().store());
  const auto g = graph::begin_side(tape, model, side, seq.owner, seq.steps);
  return {detail::stack_rows(tape, g.summary.forward), detail::stack_rows(tape, g.summary.backward)};
}

/// Scores for every step of `own`, conditioned on `other`'s whole-sequence summaries when the
/// backbone is interacting.
inline std::vector<double> attention_scores(const Model& model, Side side, const BiSummary& own,
                                            const BiSummary& other) {
  if (!uses_attention(model.backbone())) throw ContractError("backbone has no attention modules");
  const std::size_t h = model.shape().hidden_dim;
  if (own.forward_states.cols() != h || other.forward_states.cols() != h || own.backward_states.cols() != h ||
      other.backward_states.cols() != h) {
    throw ShapeError("summary width does not match hidden size " + std::to_string(h));
  }
  if (other.length() == 0) throw ContractError("attention needs a nonempty paired sequence");
  Tape tape(model.parameters().store());
  const SideParams& sp = model.parameters().side(side);
  Var of, ob;
  if (is_interacting(model.backbone())) {
    of = tape.constant(other.forward_at(other.length() - 1));
    ob = tape.constant(other.backward_at(0));
  } else {
    of = ob = tape.constant(Tensor::vector(h));
  }
  std::vector<double> out;
  for (std::size_t t = 0; t < own.length(); ++t) {
    const Var a =
        graph::attention_score(tape, sp, tape.constant(own.forward_at(t)), tape.constant(own.backward_at(t)), of, ob);
    out.push_back(tape.scalar(a));
  }
  return out;
}

struct RecurrenceTrace {
  std::vector<Tensor> states;
  std::vector<Tensor> candidates;
  Tensor final;
};

/// Runs the side's recurrence over `seq`. `scores` gates each step for attention backbones and
/// must be empty for rnn/lstm.
inline RecurrenceTrace gated_recurrence(const Model& model, Side side, const EntitySequence& seq,
                                        std::span<const double> scores) {
  Tape tape(model.parameters().store());
  const auto inputs = graph::side_inputs(tape, model, side, seq.owner, seq.steps);
  const SideParams& sp = model.parameters().side(side);
  graph::RecurrenceVars rv;
  switch (model.backbone()) {
    case Backbone::rnn: rv = graph::plain_recurrence(tape, sp, inputs); break;
    case Backbone::lstm: rv = graph::lstm_recurrence(tape, sp, inputs); break;
    default: {
      std::vector<Var> a;
      for (double s : scores) a.push_back(tape.constant(Tensor::vector(1, s)));
      rv = graph::gated_recurrence(tape, sp, inputs, a, model.shape().hidden_dim);
    }
  }
  RecurrenceTrace out;
  for (Var v : rv.states) out.states.push_back(tape.value(v));
  for (Var v : rv.candidates) out.candidates.push_back(tape.value(v));
  out.final = tape.value(rv.final);
  return out;
}

inline Tensor project(const Model& model, Side side, const Tensor& h) {
  if (h.rank() != 1 || h.size() != model.shape().hidden_dim) {
    throw ShapeError("projection input has shape " + shape_string(h.shape()) + ", expected [" +
                     std::to_string(model.shape().hidden_dim) + "]");
  }
  Tape tape(model.parameters().store());
  return tape.value(graph::project(tape, model.parameters().side(side), tape.constant(h)));
}

}  // namespace iarn
