#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace iarn {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace detail {

// Native-endian fixed-width fields.
class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.append(s); }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& bytes() const noexcept { return buf_; }

  /// The buffer followed by its FNV-1a checksum.
  std::string sealed() const {
    std::string out = buf_;
    const std::uint64_t sum = fnv1a64(out);
    out.append(reinterpret_cast<const char*>(&sum), sizeof(sum));
    return out;
  }

 private:
  std::string buf_;
};

/// Reads what ByteWriter wrote; running past the end throws `Err`.
template <typename Err>
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Err("file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Splits off and verifies the trailing checksum; returns the body.
template <typename Err>
std::string_view unseal(std::string_view bytes) {
  if (bytes.size() < sizeof(std::uint64_t)) throw Err("file is truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
  if (fnv1a64(body) != stored) throw Err("integrity check failed (truncated or corrupted)");
  return body;
}

}  // namespace detail
}  // namespace iarn
