#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>

#include "iarn/data/interactions.hpp"
#include "iarn/data/taxonomy.hpp"
#include "iarn/error.hpp"
#include "iarn/io/binary.hpp"

namespace iarn {

/// A filtered, split dataset ready for training. Train and test share entity maps.
struct Dataset {
  InteractionLog train;
  InteractionLog test;
  std::optional<FeatureTaxonomy> taxonomy;
};

namespace detail {

inline constexpr char bundle_magic[8] = {'I', 'A', 'R', 'N', 'D', 'A', 'T', 'A'};
inline constexpr std::uint32_t bundle_version = 1;

class BundleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline void put_index(ByteWriter& w, const EntityIndex& index) {
  w.put<std::uint64_t>(index.size());
  for (const auto& t : index.tokens()) w.put_string(t);
}

inline EntityIndex get_index(ByteReader<BundleError>& r) {
  EntityIndex index;
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto token = r.get_string();
    if (index.intern(token) != i) throw BundleError("duplicate token '" + token + "'");
  }
  return index;
}

inline void put_records(ByteWriter& w, const InteractionLog& log) {
  w.put<std::uint64_t>(log.records.size());
  for (const auto& rec : log.records) {
    w.put<std::uint32_t>(rec.user);
    w.put<std::uint32_t>(rec.item);
    w.put<double>(rec.rating);
    w.put<std::int64_t>(rec.timestamp);
  }
}

inline void get_records(ByteReader<BundleError>& r, InteractionLog& log) {
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    Interaction rec;
    rec.user = r.get<std::uint32_t>();
    rec.item = r.get<std::uint32_t>();
    rec.rating = r.get<double>();
    rec.timestamp = r.get<std::int64_t>();
    if (rec.user >= log.users.size() || rec.item >= log.items.size()) throw BundleError("record index out of range");
    log.records.push_back(rec);
  }
}

}  // namespace detail

inline std::string encode_bundle(const Dataset& ds) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(detail::bundle_magic, 8));
  w.put<std::uint32_t>(detail::bundle_version);
  detail::put_index(w, ds.train.users);
  detail::put_index(w, ds.train.items);
  detail::put_records(w, ds.train);
  detail::put_records(w, ds.test);
  w.put<std::uint8_t>(ds.taxonomy ? 1 : 0);
  if (ds.taxonomy) {
    const auto& tax = *ds.taxonomy;
    detail::put_index(w, tax.features);
    for (const auto& p : tax.parent) w.put<std::int64_t>(p ? static_cast<std::int64_t>(*p) : -1);
    w.put<std::uint64_t>(tax.item_features.size());
    for (const auto& list : tax.item_features) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
      for (auto f : list) w.put<std::uint32_t>(f);
    }
  }
  return w.sealed();
}

inline Dataset decode_bundle(std::string_view bytes) {
  using detail::BundleError;
  detail::ByteReader<BundleError> r(detail::unseal<BundleError>(bytes));
  if (r.get_bytes(8) != std::string_view(detail::bundle_magic, 8)) throw BundleError("not a dataset bundle");
  if (r.get<std::uint32_t>() != detail::bundle_version) throw BundleError("unsupported bundle version");
  Dataset ds;
  ds.train.users = detail::get_index(r);
  ds.train.items = detail::get_index(r);
  ds.test.users = ds.train.users;
  ds.test.items = ds.train.items;
  detail::get_records(r, ds.train);
  detail::get_records(r, ds.test);
  if (r.get<std::uint8_t>()) {
    FeatureTaxonomy tax;
    tax.features = detail::get_index(r);
    for (std::size_t f = 0; f < tax.features.size(); ++f) {
      const auto p = r.get<std::int64_t>();
      if (p >= static_cast<std::int64_t>(tax.features.size())) throw BundleError("parent index out of range");
      tax.parent.push_back(p < 0 ? std::nullopt : std::optional<std::uint32_t>(static_cast<std::uint32_t>(p)));
    }
    tax.item_features.resize(r.get<std::uint64_t>());
    for (auto& list : tax.item_features) {
      list.resize(r.get<std::uint32_t>());
      for (auto& f : list) {
        f = r.get<std::uint32_t>();
        if (f >= tax.features.size()) throw BundleError("feature index out of range");
      }
    }
    detail::check_acyclic(tax);
    ds.taxonomy = std::move(tax);
  }
  if (!r.done()) throw BundleError("bundle has trailing bytes");
  return ds;
}

inline void save_bundle(const std::filesystem::path& path, const Dataset& ds) {
  const std::string bytes = encode_bundle(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

inline Dataset load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open bundle '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_bundle(bytes);
  } catch (const detail::BundleError& e) {
    throw ValidationError("bundle '" + path.string() + "': " + e.what());
  }
}

}  // namespace iarn
