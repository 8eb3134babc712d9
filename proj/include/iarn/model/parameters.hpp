#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "iarn/error.hpp"
#include "iarn/numerics/tape.hpp"

namespace iarn {

enum class Backbone : std::uint8_t { rnn, lstm, tagm, iarn_plain, iarn };
enum class EncoderMode : std::uint8_t { none, flat, hierarchical };
enum class Side : std::uint8_t { user, item };

inline std::string_view to_string(Backbone b) {
  switch (b) {
    case Backbone::rnn: return "rnn";
    case Backbone::lstm: return "lstm";
    case Backbone::tagm: return "tagm";
    case Backbone::iarn_plain: return "iarn-plain";
    case Backbone::iarn: return "iarn";
  }
  return "?";
}

inline std::optional<Backbone> parse_backbone(std::string_view s) {
  for (auto b : {Backbone::rnn, Backbone::lstm, Backbone::tagm, Backbone::iarn_plain, Backbone::iarn}) {
    if (s == to_string(b)) return b;
  }
  if (s == "iarn_plain") return Backbone::iarn_plain;
  return std::nullopt;
}

inline std::string_view to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::none: return "none";
    case EncoderMode::flat: return "flat";
    case EncoderMode::hierarchical: return "hier";
  }
  return "?";
}

inline std::optional<EncoderMode> parse_encoder(std::string_view s) {
  if (s == "none") return EncoderMode::none;
  if (s == "flat") return EncoderMode::flat;
  if (s == "hier" || s == "hierarchical") return EncoderMode::hierarchical;
  return std::nullopt;
}

inline std::string_view to_string(Side s) { return s == Side::user ? "user" : "item"; }

/// Backbones whose recurrence is gated by per-step attention scores.
inline bool uses_attention(Backbone b) {
  return b == Backbone::tagm || b == Backbone::iarn_plain || b == Backbone::iarn;
}

/// Backbones whose attention on one side reads the other side's summaries.
inline bool is_interacting(Backbone b) { return b == Backbone::iarn_plain || b == Backbone::iarn; }

struct ModelShape {
  Backbone backbone = Backbone::iarn;
  EncoderMode encoder = EncoderMode::none;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_features = 0;
  std::size_t embed_dim = 25;
  std::size_t hidden_dim = 64;
  std::size_t attention_dim = 64;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;

  void validate() const {
    if (num_users == 0 || num_items == 0) throw ContractError("model needs at least one user and one item");
    if (embed_dim == 0 || hidden_dim == 0 || attention_dim == 0) throw ContractError("model dimensions must be positive");
    if (encoder != EncoderMode::none && backbone != Backbone::iarn) {
      throw ContractError("feature encoders are only part of the iarn backbone");
    }
  }
};

/// Parameter handles for one side's network. Unused handles keep their default (invalid) value.
struct SideParams {
  ParamId embeddings;  // rows are this network's inputs: item embeddings on the user side

  ParamId rec_W, rec_H, rec_b;  // rnn and attention-gated recurrence

  // LSTM gates in the order input, forget, output, cell.
  std::array<ParamId, 4> lstm_W{}, lstm_H{}, lstm_b{};

  ParamId proj_W, proj_b, proj_alpha;

  ParamId fwd_W, fwd_H, fwd_b;
  ParamId bwd_W, bwd_H, bwd_b;
  ParamId att_L, att_b, att_M;
};

class ModelParameters {
 public:
  enum class Init : std::uint8_t { fan_in, zero, one, prelu_slope };

  struct Entry {
    std::string name;
    Shape shape;
    Init init;
  };

  /// Every tensor the given shape requires, in storage order.
  static std::vector<Entry> layout(const ModelShape& s) {
    s.validate();
    const std::size_t d = s.embed_dim, h = s.hidden_dim, p = s.attention_dim;
    std::vector<Entry> out;
    out.push_back({"item_embeddings", {s.num_items, d}, Init::fan_in});
    out.push_back({"user_embeddings", {s.num_users, d}, Init::fan_in});
    for (const char* side : {"user", "item"}) {
      const std::string pre = std::string(side) + ".";
      if (s.backbone == Backbone::lstm) {
        for (const char* gate : {"input", "forget", "output", "cell"}) {
          const std::string g = pre + "lstm." + gate + ".";
          out.push_back({g + "W", {h, h}, Init::fan_in});
          out.push_back({g + "H", {h, d}, Init::fan_in});
          out.push_back({g + "b", {h}, std::string_view(gate) == "forget" ? Init::one : Init::zero});
        }
      } else {
        out.push_back({pre + "rec.W", {h, h}, Init::fan_in});
        out.push_back({pre + "rec.H", {h, d}, Init::fan_in});
        out.push_back({pre + "rec.b", {h}, Init::zero});
      }
      out.push_back({pre + "proj.W", {d, h}, Init::fan_in});
      out.push_back({pre + "proj.b", {d}, Init::zero});
      out.push_back({pre + "proj.alpha", {1}, Init::prelu_slope});
      if (uses_attention(s.backbone)) {
        for (const char* dir : {"fwd", "bwd"}) {
          const std::string g = pre + dir + ".";
          out.push_back({g + "W", {h, d}, Init::fan_in});
          out.push_back({g + "H", {h, h}, Init::fan_in});
          out.push_back({g + "b", {h}, Init::zero});
        }
        out.push_back({pre + "att.L", {p, 4 * h}, Init::fan_in});
        out.push_back({pre + "att.b", {p}, Init::zero});
        out.push_back({pre + "att.M", {p}, Init::fan_in});
      }
    }
    if (s.encoder != EncoderMode::none) {
      for (std::size_t f = 0; f < s.num_features; ++f) {
        out.push_back({"feature." + std::to_string(f), {d, d}, Init::fan_in});
      }
    }
    return out;
  }

  /// Fresh parameters: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, LSTM forget bias 1,
  /// PReLU slopes 0.25.
  static ModelParameters initialize(const ModelShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParameterStore store;
    for (const auto& e : layout(shape)) {
      Tensor t(e.shape);
      switch (e.init) {
        case Init::fan_in: {
          const std::size_t fan_in = e.shape.size() == 2 ? e.shape[1] : e.shape[0];
          const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
          std::uniform_real_distribution<double> dist(-bound, bound);
          for (auto& v : t.data()) v = dist(rng);
          break;
        }
        case Init::zero: break;
        case Init::one: t.fill(1.0); break;
        case Init::prelu_slope: t.fill(0.25); break;
      }
      store.add(e.name, std::move(t));
    }
    return ModelParameters(shape, std::move(store));
  }

  /// Adopts an existing store after checking it holds exactly the tensors `shape` requires.
  static ModelParameters bind(const ModelShape& shape, ParameterStore store) {
    const auto entries = layout(shape);
    if (entries.size() != store.size()) {
      throw CheckpointError("expected " + std::to_string(entries.size()) + " parameter tensors, found " +
                            std::to_string(store.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (store.name(i) != entries[i].name) {
        throw CheckpointError("parameter " + std::to_string(i) + " is '" + store.name(i) + "', expected '" +
                              entries[i].name + "'");
      }
      if (store.at(i).shape() != entries[i].shape) {
        throw CheckpointError("parameter '" + entries[i].name + "' has shape " + shape_string(store.at(i).shape()) +
                              ", expected " + shape_string(entries[i].shape));
      }
    }
    return ModelParameters(shape, std::move(store));
  }

  const ModelShape& shape() const noexcept { return shape_; }
  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }
  const SideParams& side(Side s) const noexcept { return s == Side::user ? user_ : item_; }
  ParamId feature_matrix(std::uint32_t f) const { return features_.at(f); }

  Tensor& operator[](ParamId id) { return store_[id]; }
  const Tensor& operator[](ParamId id) const { return store_[id]; }

  friend bool operator==(const ModelParameters& a, const ModelParameters& b) {
    return a.shape_ == b.shape_ && a.store_ == b.store_;
  }

 private:
  ModelParameters(const ModelShape& shape, ParameterStore store) : shape_(shape), store_(std::move(store)) {
    bind_ids(Side::user, user_);
    bind_ids(Side::item, item_);
    if (shape_.encoder != EncoderMode::none) {
      for (std::size_t f = 0; f < shape_.num_features; ++f) features_.push_back(id("feature." + std::to_string(f)));
    }
  }

  ParamId id(const std::string& name) const {
    auto found = store_.find(name);
    if (!found) throw LookupError("missing parameter '" + name + "'");
    return *found;
  }

  void bind_ids(Side s, SideParams& sp) {
    const std::string pre = std::string(to_string(s)) + ".";
    sp.embeddings = id(s == Side::user ? "item_embeddings" : "user_embeddings");
    if (shape_.backbone == Backbone::lstm) {
      const char* gates[] = {"input", "forget", "output", "cell"};
      for (std::size_t g = 0; g < 4; ++g) {
        const std::string base = pre + "lstm." + gates[g] + ".";
        sp.lstm_W[g] = id(base + "W");
        sp.lstm_H[g] = id(base + "H");
        sp.lstm_b[g] = id(base + "b");
      }
    } else {
      sp.rec_W = id(pre + "rec.W");
      sp.rec_H = id(pre + "rec.H");
      sp.rec_b = id(pre + "rec.b");
    }
    sp.proj_W = id(pre + "proj.W");
    sp.proj_b = id(pre + "proj.b");
    sp.proj_alpha = id(pre + "proj.alpha");
    if (uses_attention(shape_.backbone)) {
      sp.fwd_W = id(pre + "fwd.W");
      sp.fwd_H = id(pre + "fwd.H");
      sp.fwd_b = id(pre + "fwd.b");
      sp.bwd_W = id(pre + "bwd.W");
      sp.bwd_H = id(pre + "bwd.H");
      sp.bwd_b = id(pre + "bwd.b");
      sp.att_L = id(pre + "att.L");
      sp.att_b = id(pre + "att.b");
      sp.att_M = id(pre + "att.M");
    }
  }

  ModelShape shape_;
  ParameterStore store_;
  SideParams user_, item_;
  std::vector<ParamId> features_;
};

}  // namespace iarn
