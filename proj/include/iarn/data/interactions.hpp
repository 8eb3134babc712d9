#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iarn/error.hpp"

namespace iarn {

/// Bijection between string tokens and contiguous 0-based indices, assigned in first-appearance order.
class EntityIndex {
 public:
  std::uint32_t intern(std::string_view token) {
    auto it = lookup_.find(std::string(token));
    if (it != lookup_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(tokens_.size());
    tokens_.emplace_back(token);
    lookup_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> find(std::string_view token) const {
    auto it = lookup_.find(std::string(token));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token(std::uint32_t id) const {
    if (id >= tokens_.size()) throw LookupError("entity index " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const EntityIndex& a, const EntityIndex& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

/// One rating event; `user` and `item` index into the owning log's entity maps.
struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionLog {
  std::vector<Interaction> records;
  EntityIndex users;
  EntityIndex items;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Reads `user_id,item_id,rating,timestamp` lines. Blank lines are skipped.
inline InteractionLog parse_interactions(std::istream& in) {
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto fields = detail::split_commas(text);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 comma-separated fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw ParseError(line_no, "empty user or item token");
    const auto rating = detail::parse_number<double>(fields[2]);
    if (!rating || !std::isfinite(*rating)) {
      throw ParseError(line_no, "rating '" + std::string(fields[2]) + "' is not a finite decimal");
    }
    const auto ts = detail::parse_number<std::int64_t>(fields[3]);
    if (!ts || *ts < 0) {
      throw ParseError(line_no, "timestamp '" + std::string(fields[3]) + "' is not a non-negative integer");
    }
    Interaction rec;
    rec.user = log.users.intern(fields[0]);
    rec.item = log.items.intern(fields[1]);
    rec.rating = *rating;
    rec.timestamp = *ts;
    log.records.push_back(rec);
  }
  return log;
}

/// Keeps interactions whose user and item each have strictly more than `k` records in `log`.
/// Counts are taken once on the input (no fixpoint iteration); survivors are re-indexed in
/// first-appearance order.
inline InteractionLog filter_min_ratings(const InteractionLog& log, std::size_t k) {
  std::vector<std::size_t> user_count(log.users.size(), 0), item_count(log.items.size(), 0);
  for (const auto& r : log.records) {
    ++user_count[r.user];
    ++item_count[r.item];
  }
  InteractionLog out;
  for (const auto& r : log.records) {
    if (user_count[r.user] <= k || item_count[r.item] <= k) continue;
    Interaction rec = r;
    rec.user = out.users.intern(log.users.token(r.user));
    rec.item = out.items.intern(log.items.token(r.item));
    out.records.push_back(rec);
  }
  return out;
}

/// Records strictly before `cutoff` go to train, the rest to test. Both keep the parent's index maps.
inline std::pair<InteractionLog, InteractionLog> temporal_split(const InteractionLog& log, std::int64_t cutoff) {
  InteractionLog train, test;
  train.users = test.users = log.users;
  train.items = test.items = log.items;
  for (const auto& r : log.records) (r.timestamp < cutoff ? train : test).records.push_back(r);
  return {std::move(train), std::move(test)};
}

/// Cutoffs used by the original temporal protocol (UTC midnight).
namespace cutoffs {
inline constexpr std::int64_t netflix = 1117584000;    // 2005-06-01
inline constexpr std::int64_t movielens = 1262304000;  // 2010-01-01
inline constexpr std::int64_t amazon = 1388534400;     // 2014-01-01
}  // namespace cutoffs

}  // namespace iarn
