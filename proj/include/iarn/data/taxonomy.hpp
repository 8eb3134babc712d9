#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "iarn/data/interactions.hpp"
#include "iarn/error.hpp"

namespace iarn {

/// Item features organised as a forest. A taxonomy without parent links is flat.
struct FeatureTaxonomy {
  EntityIndex features;
  std::vector<std::optional<std::uint32_t>> parent;      // per feature
  std::vector<std::vector<std::uint32_t>> item_features;  // per item, assigned (leaf) features

  std::size_t feature_count() const noexcept { return features.size(); }

  bool is_flat() const {
    return std::none_of(parent.begin(), parent.end(), [](const auto& p) { return p.has_value(); });
  }

  /// Features from the root down to `feature`, inclusive.
  std::vector<std::uint32_t> root_path(std::uint32_t feature) const {
    std::vector<std::uint32_t> path;
    std::optional<std::uint32_t> cur = feature;
    while (cur) {
      if (path.size() > parent.size()) throw ValidationError("parent chain does not terminate");
      path.push_back(*cur);
      cur = parent.at(*cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  const std::vector<std::uint32_t>& features_of(std::uint32_t item) const {
    static const std::vector<std::uint32_t> none;
    return item < item_features.size() ? item_features[item] : none;
  }
};

namespace detail {

inline void check_acyclic(const FeatureTaxonomy& tax) {
  enum class Mark : std::uint8_t { fresh, active, done };
  std::vector<Mark> mark(tax.parent.size(), Mark::fresh);
  for (std::uint32_t start = 0; start < tax.parent.size(); ++start) {
    std::vector<std::uint32_t> trail;
    std::optional<std::uint32_t> cur = start;
    while (cur && mark[*cur] == Mark::fresh) {
      mark[*cur] = Mark::active;
      trail.push_back(*cur);
      cur = tax.parent[*cur];
    }
    if (cur && mark[*cur] == Mark::active) {
      std::string cycle;
      auto it = std::find(trail.begin(), trail.end(), *cur);
      for (; it != trail.end(); ++it) cycle += tax.features.token(*it) + " -> ";
      cycle += tax.features.token(*cur);
      throw ValidationError("feature hierarchy contains a cycle: " + cycle);
    }
    for (auto f : trail) mark[f] = Mark::done;
  }
}

}  // namespace detail

/// Builds a taxonomy from an `item_id,feature_id` stream and an optional
/// `feature_id,parent_feature_id` stream (empty parent marks a root). Items not present in
/// `items` are ignored. With a hierarchy, every assigned feature must be declared in it.
inline FeatureTaxonomy load_taxonomy(std::istream& item_features, std::istream* hierarchy, const EntityIndex& items) {
  FeatureTaxonomy tax;
  tax.item_features.resize(items.size());
  std::string line;
  std::size_t line_no = 0;

  if (hierarchy) {
    std::vector<std::pair<std::uint32_t, std::optional<std::uint32_t>>> links;
    std::vector<bool> declared;
    while (std::getline(*hierarchy, line)) {
      ++line_no;
      const auto text = detail::trim(line);
      if (text.empty()) continue;
      const auto fields = detail::split_commas(text);
      if (fields.size() != 2 || fields[0].empty()) {
        throw ParseError(line_no, "hierarchy rows must be 'feature_id,parent_feature_id'");
      }
      const auto f = tax.features.intern(fields[0]);
      std::optional<std::uint32_t> p;
      if (!fields[1].empty()) p = tax.features.intern(fields[1]);
      declared.resize(tax.features.size(), false);
      if (declared[f]) throw ValidationError("feature '" + std::string(fields[0]) + "' has more than one parent row");
      declared[f] = true;
      links.emplace_back(f, p);
    }
    tax.parent.assign(tax.features.size(), std::nullopt);
    for (auto [f, p] : links) tax.parent[f] = p;
    detail::check_acyclic(tax);
  }

  const bool closed = hierarchy != nullptr;
  line_no = 0;
  while (std::getline(item_features, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto fields = detail::split_commas(text);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(line_no, "item-feature rows must be 'item_id,feature_id'");
    }
    std::uint32_t f;
    if (closed) {
      const auto found = tax.features.find(fields[1]);
      if (!found) {
        throw ValidationError("item-feature line " + std::to_string(line_no) + ": unknown feature '" +
                              std::string(fields[1]) + "'");
      }
      f = *found;
    } else {
      f = tax.features.intern(fields[1]);
    }
    const auto item = items.find(fields[0]);
    if (!item) continue;
    auto& list = tax.item_features[*item];
    if (std::find(list.begin(), list.end(), f) == list.end()) list.push_back(f);
  }
  if (!closed) tax.parent.assign(tax.features.size(), std::nullopt);
  return tax;
}

}  // namespace iarn
