#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iarn/error.hpp"
#include "iarn/io/binary.hpp"
#include "iarn/model/parameters.hpp"

namespace iarn {

struct Checkpoint {
  ModelShape shape;
  std::uint64_t config_digest = 0;
  ParameterStore store;
};

namespace detail {

inline constexpr char checkpoint_magic[8] = {'I', 'A', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

using CheckpointReader = ByteReader<CheckpointError>;

}  // namespace detail

/// Self-describing binary: magic, version, model shape, config digest, then every tensor as
/// (name, rank, dims, float64 data), closed by an FNV-1a checksum over all preceding bytes.
inline std::string encode_checkpoint(const ModelParameters& params, std::uint64_t config_digest) {
  const auto& store = params.store();
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store.at(i).all_finite()) throw CheckpointError("parameter '" + store.name(i) + "' is not finite");
  }
  const ModelShape& s = params.shape();
  detail::ByteWriter w;
  w.put_bytes(std::string_view(detail::checkpoint_magic, 8));
  w.put<std::uint32_t>(detail::checkpoint_version);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.backbone));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.encoder));
  for (std::uint64_t v : {s.num_users, s.num_items, s.num_features, s.embed_dim, s.hidden_dim, s.attention_dim}) {
    w.put<std::uint64_t>(v);
  }
  w.put<std::uint64_t>(config_digest);
  w.put<std::uint64_t>(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.name(i);
    const auto& t = store.at(i);
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  }
  return w.sealed();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(std::uint64_t) + 8) throw CheckpointError("checkpoint is truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
  if (fnv1a64(body) != stored) throw CheckpointError("checkpoint integrity check failed (truncated or corrupted)");

  detail::CheckpointReader r(body);
  if (r.get_bytes(8) != std::string_view(detail::checkpoint_magic, 8)) throw CheckpointError("not a checkpoint file");
  if (r.get<std::uint32_t>() != detail::checkpoint_version) throw CheckpointError("unsupported checkpoint version");
  Checkpoint ck;
  const auto bb = r.get<std::uint8_t>();
  const auto enc = r.get<std::uint8_t>();
  if (bb > static_cast<std::uint8_t>(Backbone::iarn) || enc > static_cast<std::uint8_t>(EncoderMode::hierarchical)) {
    throw CheckpointError("checkpoint has an unknown backbone or encoder tag");
  }
  ck.shape.backbone = static_cast<Backbone>(bb);
  ck.shape.encoder = static_cast<EncoderMode>(enc);
  ck.shape.num_users = r.get<std::uint64_t>();
  ck.shape.num_items = r.get<std::uint64_t>();
  ck.shape.num_features = r.get<std::uint64_t>();
  ck.shape.embed_dim = r.get<std::uint64_t>();
  ck.shape.hidden_dim = r.get<std::uint64_t>();
  ck.shape.attention_dim = r.get<std::uint64_t>();
  ck.config_digest = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > Shape::max_rank) throw CheckpointError("parameter '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor t(shape);
    for (auto& v : t.data()) v = r.get<double>();
    ck.store.add(name, std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params,
                            std::uint64_t config_digest) {
  const std::string bytes = encode_checkpoint(params, config_digest);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

/// Loads parameters, checking the stored shape against the expected backbone and (when given)
/// the expected config digest and model shape.
inline ModelParameters load_checkpoint(const std::filesystem::path& path, std::optional<Backbone> expected_backbone,
                                       std::optional<std::uint64_t> expected_digest = std::nullopt,
                                       std::optional<ModelShape> expected_shape = std::nullopt) {
  Checkpoint ck = read_checkpoint(path);
  if (expected_backbone && ck.shape.backbone != *expected_backbone) {
    throw CheckpointError("checkpoint holds backbone '" + std::string(to_string(ck.shape.backbone)) + "', expected '" +
                          std::string(to_string(*expected_backbone)) + "'");
  }
  if (expected_digest && ck.config_digest != *expected_digest) {
    throw CheckpointError("checkpoint config digest does not match the requested configuration");
  }
  if (expected_shape && !(ck.shape == *expected_shape)) {
    throw CheckpointError("checkpoint model shape does not match the dataset and configuration");
  }
  return ModelParameters::bind(ck.shape, std::move(ck.store));
}

}  // namespace iarn
