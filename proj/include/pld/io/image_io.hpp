#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "pld/camera.hpp"
#include "pld/error.hpp"
#include "pld/image.hpp"

namespace pld::io {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path, "read failed");
  return out;
}

inline void write_file(const std::string& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline void write_file(const std::string& path, const Bytes& bytes) { write_file(path, bytes.data(), bytes.size()); }
inline void write_file(const std::string& path, const std::string& text) { write_file(path, text.data(), text.size()); }

inline std::string read_text(const std::string& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

namespace detail {

struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline void begin_png_read(PngImage& p, const Bytes& bytes) {
  if (bytes.empty()) throw FormatError("png: empty input");
  if (!png_image_begin_read_from_memory(&p.img, bytes.data(), bytes.size()))
    throw FormatError(std::string("png: ") + p.img.message);
}

inline Bytes png_encode(PngImage& p, const void* buffer, std::ptrdiff_t row_stride) {
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p.img, nullptr, &size, 0, buffer, static_cast<png_int_32>(row_stride), nullptr))
    throw FormatError(std::string("png: ") + p.img.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&p.img, out.data(), &size, 0, buffer, static_cast<png_int_32>(row_stride), nullptr))
    throw FormatError(std::string("png: ") + p.img.message);
  out.resize(size);
  return out;
}

}  // namespace detail

/// Decode an 8-bit PNG into RGB in [0, 1]. Gray and palette files are
/// expanded to three channels; alpha is dropped.
inline ImageBuffer decode_png(const Bytes& bytes) {
  detail::PngImage p;
  detail::begin_png_read(p, bytes);
  if (p.img.format & PNG_FORMAT_FLAG_LINEAR) throw FormatError("png: expected 8-bit samples, got 16-bit");
  p.img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, buf.data(), 0, nullptr))
    throw FormatError(std::string("png: ") + p.img.message);
  ImageBuffer out(static_cast<int>(p.img.width), static_cast<int>(p.img.height), 3);
  std::transform(buf.begin(), buf.end(), out.data().begin(), [](std::uint8_t v) { return v / 255.0; });
  return out;
}

/// Encode 1- or 3-channel values in [0, 1] as an 8-bit PNG (values clamped).
inline Bytes encode_png(const ImageBuffer& img) {
  if (img.channels() != 1 && img.channels() != 3) throw ArgumentError("encode_png: need 1 or 3 channels");
  std::vector<std::uint8_t> buf(img.size());
  std::transform(img.data().begin(), img.data().end(), buf.begin(),
                 [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); });
  detail::PngImage p;
  p.img.width = static_cast<png_uint_32>(img.width());
  p.img.height = static_cast<png_uint_32>(img.height());
  p.img.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  return detail::png_encode(p, buf.data(), 0);
}

/// KITTI depth PNG: 16-bit single channel, depth = raw / 256, raw 0 = invalid.
inline DepthMap read_depth_png16(const Bytes& bytes) {
  detail::PngImage p;
  detail::begin_png_read(p, bytes);
  if (p.img.format != PNG_FORMAT_LINEAR_Y)
    throw FormatError("depth png: expected 16-bit single-channel image");
  std::vector<std::uint16_t> raw(PNG_IMAGE_PIXEL_COMPONENT_SIZE(p.img.format) == 2
                                     ? static_cast<std::size_t>(p.img.width) * p.img.height
                                     : 0);
  if (!png_image_finish_read(&p.img, nullptr, raw.data(), 0, nullptr))
    throw FormatError(std::string("depth png: ") + p.img.message);
  DepthMap d(static_cast<int>(p.img.width), static_cast<int>(p.img.height), 0.0, false);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 0) continue;
    d.values.data()[i] = raw[i] / 256.0;
    d.valid[i] = 1;
  }
  return d;
}

/// Inverse of read_depth_png16. Invalid pixels and depths that round to zero
/// are stored as 0; depths beyond 65535/256 m saturate.
inline Bytes write_depth_png16(const DepthMap& d) {
  std::vector<std::uint16_t> raw(d.pixel_count(), 0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!d.valid[i]) continue;
    const double v = std::round(d.values.data()[i] * 256.0);
    raw[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  detail::PngImage p;
  p.img.width = static_cast<png_uint_32>(d.width());
  p.img.height = static_cast<png_uint_32>(d.height());
  p.img.format = PNG_FORMAT_LINEAR_Y;
  return detail::png_encode(p, raw.data(), 0);
}

/// Binary PPM (P6) or PGM (P5) with maxval <= 255, returned as RGB in [0, 1].
inline ImageBuffer decode_pnm(const Bytes& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    long v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
      v = v * 10 + (bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("pnm: bad ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("pnm: expected P5 or P6 magic");
  const int ch = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const long w = number("width"), h = number("height"), maxval = number("maxval");
  if (w < 1 || h < 1) throw FormatError("pnm: non-positive size");
  if (maxval < 1 || maxval > 255) throw FormatError("pnm: only 8-bit maxval is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pnm: malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h * ch;
  if (bytes.size() - pos < n) throw FormatError("pnm: truncated pixel data");
  ImageBuffer out(static_cast<int>(w), static_cast<int>(h), 3);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i)
    for (int c = 0; c < 3; ++c) out.data()[i * 3 + c] = bytes[pos + i * ch + (ch == 3 ? c : 0)] / static_cast<double>(maxval);
  return out;
}

/// Load an 8-bit PNG, PPM or PGM as RGB in [0, 1], picked by file signature.
inline ImageBuffer read_image(const std::string& path) {
  const Bytes b = read_file(path);
  try {
    if (b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0) return decode_png(b);
    if (b.size() >= 2 && b[0] == 'P') return decode_pnm(b);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  throw FormatError(path + ": unrecognized image format (expected PNG, PPM or PGM)");
}

inline void write_image_png(const std::string& path, const ImageBuffer& img) { write_file(path, encode_png(img)); }

/// Single-channel PFM ("Pf", little-endian, bottom row first). Invalid
/// pixels are stored as NaN.
template <class Tag>
Bytes encode_pfm(const ScalarField<Tag>& f) {
  const std::string header = "Pf\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n-1.0\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + f.pixel_count() * 4);
  for (int y = f.height() - 1; y >= 0; --y)
    for (int x = 0; x < f.width(); ++x) {
      const float v = f.is_valid(x, y) ? static_cast<float>(f(x, y)) : std::numeric_limits<float>::quiet_NaN();
      std::uint32_t u = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
    }
  return out;
}

template <class Tag>
ScalarField<Tag> decode_pfm(const Bytes& bytes) {
  std::size_t pos = 0;
  auto token = [&] {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && t.size() < 32) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "Pf") throw FormatError("pfm: expected single-channel 'Pf' magic");
  long w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stol(token());
    h = std::stol(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw FormatError("pfm: malformed header");
  }
  if (w < 1 || h < 1 || scale == 0.0 || !std::isfinite(scale)) throw FormatError("pfm: bad header values");
  if (pos >= bytes.size()) throw FormatError("pfm: truncated header");
  ++pos;  // single whitespace after scale
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if ((bytes.size() - pos) / 4 < n) throw FormatError("pfm: truncated pixel data");
  const bool little = scale < 0.0;
  ScalarField<Tag> f(static_cast<int>(w), static_cast<int>(h), 0.0, false);
  for (long y = h - 1; y >= 0; --y)
    for (long x = 0; x < w; ++x, pos += 4) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[pos + (little ? k : 3 - k)]) << (8 * k);
      const float v = std::bit_cast<float>(u);
      if (!std::isfinite(v)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.values.data()[i] = v;
      f.valid[i] = 1;
    }
  return f;
}

/// Depth by extension: ".png" (16-bit, /256) or ".pfm" (float32).
inline DepthMap read_depth(const std::string& path) {
  const std::string ext = lower_extension(path);
  const Bytes b = read_file(path);
  try {
    if (ext == ".png") return read_depth_png16(b);
    if (ext == ".pfm") return decode_pfm<DepthTag>(b);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  throw FormatError(path + ": depth files must be .png or .pfm");
}

/// Write a ".png" depth map together with a ".pfm" sidecar next to it, or a
/// single ".pfm" file.
inline void write_depth(const std::string& path, const DepthMap& d) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_file(path, write_depth_png16(d));
    write_file(std::filesystem::path(path).replace_extension(".pfm").string(), encode_pfm(d));
  } else if (ext == ".pfm") {
    write_file(path, encode_pfm(d));
  } else {
    throw ArgumentError(path + ": depth output must end in .png or .pfm");
  }
}

}  // namespace pld::io
