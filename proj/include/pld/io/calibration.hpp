#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "pld/camera.hpp"
#include "pld/error.hpp"

namespace pld::io {

using ProjectionMatrix = std::array<double, 12>;  // 3x4 row-major

/// Left/right rectified projection matrices (KITTI P2 = left colour,
/// P3 = right colour) plus the image size when the file provides one.
struct CalibrationSet {
  ProjectionMatrix p_left{};
  ProjectionMatrix p_right{};
  std::optional<std::pair<int, int>> image_size;  // (width, height)

  double fx() const { return p_left[0]; }
  double baseline() const { return (p_left[3] - p_right[3]) / p_left[0]; }

  /// Intrinsics at the given resolution. When the file carries its own image
  /// size and it differs, focal lengths and principal point are rescaled.
  Intrinsics intrinsics(int width, int height) const {
    Intrinsics k{p_left[0], p_left[5], p_left[2], p_left[6], width, height};
    if (image_size && (image_size->first != width || image_size->second != height)) {
      k.width = image_size->first;
      k.height = image_size->second;
      k = k.scaled(width, height);
    }
    k.validate();
    return k;
  }

  Intrinsics intrinsics() const {
    if (!image_size) throw ArgumentError("calibration has no image size; pass one explicitly");
    return intrinsics(image_size->first, image_size->second);
  }

  StereoRig rig(int width, int height) const {
    StereoRig r{intrinsics(width, height), baseline()};
    r.validate();
    return r;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <std::size_t N>
std::array<double, N> parse_numbers(const std::string& rest, std::size_t line_no, const std::string& key) {
  std::istringstream in(rest);
  std::array<double, N> out{};
  std::size_t count = 0;
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ParseError(line_no, key + ": '" + tok + "' is not a number");
    if (!std::isfinite(v)) throw ParseError(line_no, key + ": non-finite value");
    if (count < N) out[count] = v;
    ++count;
  }
  if (count != N)
    throw ParseError(line_no, key + ": expected " + std::to_string(N) + " numbers, got " + std::to_string(count));
  return out;
}

}  // namespace detail

/// Parse a KITTI-style calibration text. Accepts `P2:`/`P3:` (object/odometry
/// layout) or `P_rect_02:`/`P_rect_03:` (raw layout, with optional
/// `S_rect_02:` image size). Other keys are ignored.
inline CalibrationSet parse_calibration(const std::string& text) {
  CalibrationSet cal;
  bool have_left = false, have_right = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, colon));
    const std::string rest = line.substr(colon + 1);
    if (key == "P2" || key == "P_rect_02") {
      cal.p_left = detail::parse_numbers<12>(rest, line_no, key);
      have_left = true;
    } else if (key == "P3" || key == "P_rect_03") {
      cal.p_right = detail::parse_numbers<12>(rest, line_no, key);
      have_right = true;
    } else if (key == "S_rect_02") {
      const auto s = detail::parse_numbers<2>(rest, line_no, key);
      if (s[0] < 1 || s[1] < 1) throw ParseError(line_no, "S_rect_02: image size must be positive");
      cal.image_size = std::make_pair(static_cast<int>(std::lround(s[0])), static_cast<int>(std::lround(s[1])));
    }
  }
  if (!have_left) throw ParseError(line_no, "missing P2 (left projection matrix)");
  if (!have_right) throw ParseError(line_no, "missing P3 (right projection matrix)");
  if (!(cal.fx() > 0.0)) throw ParseError(line_no, "P2[0,0] (fx) must be > 0");
  if (!(cal.baseline() > 0.0)) throw ParseError(line_no, "derived baseline must be > 0");
  return cal;
}

/// Calibration text for a rectified rig: P2 with zero translation, P3 with
/// tx = -fx * baseline, plus S_rect_02 carrying the reference resolution.
inline std::string synthesize_calibration(const Intrinsics& K, double baseline) {
  K.validate();
  if (!(baseline > 0.0)) throw ArgumentError("synthesize_calibration: baseline must be > 0");
  auto row = [](const char* key, const ProjectionMatrix& p) {
    std::string s = key;
    char buf[40];
    for (double v : p) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      s += buf;
    }
    return s + "\n";
  };
  const ProjectionMatrix p2{K.fx, 0, K.cx, 0, 0, K.fy, K.cy, 0, 0, 0, 1, 0};
  ProjectionMatrix p3 = p2;
  p3[3] = -K.fx * baseline;
  return row("P2:", p2) + row("P3:", p3) + "S_rect_02: " + std::to_string(K.width) + " " +
         std::to_string(K.height) + "\n";
}

}  // namespace pld::io
