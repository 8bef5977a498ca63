#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "pld/camera.hpp"
#include "pld/io/image_io.hpp"

namespace pld::io {

namespace detail {

inline void put_f32(Bytes& out, double v) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
}

inline void put_points(Bytes& out, const PointCloud& cloud) {
  out.reserve(out.size() + cloud.size() * (cloud.has_intensity ? 16 : 12));
  for (const auto& p : cloud.points) {
    put_f32(out, p.x);
    put_f32(out, p.y);
    put_f32(out, p.z);
    if (cloud.has_intensity) put_f32(out, p.intensity);
  }
}

}  // namespace detail

inline Bytes encode_ply(const PointCloud& cloud) {
  std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) +
                  "\nproperty float x\nproperty float y\nproperty float z\n";
  if (cloud.has_intensity) h += "property float intensity\n";
  h += "end_header\n";
  Bytes out(h.begin(), h.end());
  detail::put_points(out, cloud);
  return out;
}

inline Bytes encode_pcd(const PointCloud& cloud) {
  const bool i = cloud.has_intensity;
  const std::string n = std::to_string(cloud.size());
  std::string h = "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n";
  h += i ? "FIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n"
         : "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n";
  h += "WIDTH " + n + "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS " + n + "\nDATA binary\n";
  Bytes out(h.begin(), h.end());
  detail::put_points(out, cloud);
  return out;
}

inline void write_ply(const PointCloud& cloud, const std::string& path) { write_file(path, encode_ply(cloud)); }
inline void write_pcd(const PointCloud& cloud, const std::string& path) { write_file(path, encode_pcd(cloud)); }

}  // namespace pld::io
