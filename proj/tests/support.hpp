#pragma once

#include <random>
#include <sstream>
#include <string>

#include "iarn/iarn.hpp"

namespace iarn::testing {

inline InteractionLog parse_log(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

inline FeatureTaxonomy parse_taxonomy(const std::string& item_features, const std::string* hierarchy,
                                      const EntityIndex& items) {
  std::istringstream f(item_features);
  if (!hierarchy) return load_taxonomy(f, nullptr, items);
  std::istringstream h(*hierarchy);
  return load_taxonomy(f, &h, items);
}

/// Every user and item appears at least once; timestamps are distinct.
inline InteractionLog dense_random_log(std::mt19937_64& rng, int users, int items, int extra) {
  std::ostringstream text;
  std::uniform_int_distribution<int> u(0, users - 1), i(0, items - 1), r(1, 5);
  int t = 0;
  for (int k = 0; k < std::max(users, items); ++k) {
    text << "u" << (k % users) << ",i" << (k % items) << "," << r(rng) << "," << t++ << "\n";
  }
  for (int k = 0; k < extra; ++k) text << "u" << u(rng) << ",i" << i(rng) << "," << r(rng) << "," << t++ << "\n";
  return parse_log(text.str());
}

inline void set_param(Model& model, const std::string& name, Tensor value) {
  const auto id = model.parameters().store().find(name);
  if (!id) throw LookupError("no parameter " + name);
  require_same_shape(model.parameters()[*id], value, name.c_str());
  model.parameters()[*id] = std::move(value);
}

inline const Tensor& get_param(const Model& model, const std::string& name) {
  return model.parameters()[*model.parameters().store().find(name)];
}

inline ModelShape small_shape(Backbone b, std::size_t users, std::size_t items, std::size_t d = 4, std::size_t h = 5,
                              std::size_t p = 4) {
  ModelShape s;
  s.backbone = b;
  s.num_users = users;
  s.num_items = items;
  s.embed_dim = d;
  s.hidden_dim = h;
  s.attention_dim = p;
  return s;
}

}  // namespace iarn::testing
