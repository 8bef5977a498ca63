#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>

#include "pld/error.hpp"
#include "pld/inference.hpp"
#include "pld/io/image_io.hpp"

namespace pld::io {

inline constexpr char kWeightsMagic[4] = {'P', 'L', 'K', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

class Reader {
 public:
  explicit Reader(const Bytes& b) : b_(b) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return b_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw LoadError(pos_, std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, have " +
                                std::to_string(remaining()) + ")");
  }

  template <class U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(static_cast<U>(b_[pos_ + k]) << (8 * k));
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void floats(float* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = std::bit_cast<float>(uint<std::uint32_t>("payload"));
  }

 private:
  const Bytes& b_;
  std::size_t pos_ = 0;
};

template <class U>
void put_uint(Bytes& out, U v) {
  for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

}  // namespace detail

/// Decode a PLKW weight file. Every size field is checked against the bytes
/// that remain before anything is allocated.
inline WeightStore load_weights(const Bytes& bytes) {
  detail::Reader r(bytes);
  if (r.str(4, "magic") != std::string(kWeightsMagic, 4)) throw LoadError(0, "bad magic (expected PLKW)");
  const std::size_t version_at = r.offset();
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kWeightsVersion) throw LoadError(version_at, "unsupported version " + std::to_string(version));
  const auto count = r.uint<std::uint32_t>("tensor count");
  WeightStore store;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t entry_at = r.offset();
    const auto name_len = r.uint<std::uint16_t>("name length");
    if (name_len == 0) throw LoadError(entry_at, "empty tensor name");
    const std::string name = r.str(name_len, "name");
    const auto ndim = r.uint<std::uint8_t>("ndim");
    WeightTensor w;
    std::size_t elems = 1;
    for (int k = 0; k < ndim; ++k) {
      const std::size_t dim_at = r.offset();
      const auto d = r.uint<std::uint32_t>("dims");
      if (d == 0) throw LoadError(dim_at, "tensor '" + name + "': zero dimension");
      if (elems > std::numeric_limits<std::size_t>::max() / d) throw LoadError(dim_at, "tensor '" + name + "': size overflow");
      elems *= d;
      w.dims.push_back(d);
    }
    if (elems > r.remaining() / 4)
      throw LoadError(r.offset(), "tensor '" + name + "': payload of " + std::to_string(elems) +
                                      " floats exceeds remaining " + std::to_string(r.remaining()) + " bytes");
    w.data.resize(elems);
    r.floats(w.data.data(), elems);
    if (store.contains(name)) throw LoadError(entry_at, "duplicate tensor '" + name + "'");
    store.insert(name, std::move(w));
  }
  if (r.remaining() != 0) throw LoadError(r.offset(), std::to_string(r.remaining()) + " trailing bytes");
  return store;
}

inline Bytes save_weights(const WeightStore& store) {
  Bytes out(kWeightsMagic, kWeightsMagic + 4);
  detail::put_uint<std::uint32_t>(out, kWeightsVersion);
  detail::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, w] : store.tensors()) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ArgumentError("save_weights: bad tensor name length");
    if (w.dims.size() > std::numeric_limits<std::uint8_t>::max()) throw ArgumentError("save_weights: too many dims");
    detail::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(w.dims.size()));
    for (auto d : w.dims) detail::put_uint<std::uint32_t>(out, d);
    for (float f : w.data) detail::put_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline WeightStore read_weights(const std::string& path) {
  const Bytes b = read_file(path);
  try {
    return load_weights(b);
  } catch (const LoadError& e) {
    throw LoadError(e.offset(), path + ": " + e.reason());
  }
}

inline void write_weights(const std::string& path, const WeightStore& store) { write_file(path, save_weights(store)); }

}  // namespace pld::io
