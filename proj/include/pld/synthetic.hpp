#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "pld/camera.hpp"
#include "pld/image.hpp"

namespace pld::synthetic {

/// Sum of random plane waves around 0.5, values stay inside (0.05, 0.95).
class SmoothTexture {
 public:
  SmoothTexture(std::uint64_t seed, int channels = 3, int waves = 6, double min_wavelength = 10.0,
                double max_wavelength = 40.0)
      : channels_(channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wl(min_wavelength, max_wavelength);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    for (int c = 0; c < channels; ++c) {
      std::vector<Wave> ws;
      double total = 0.0;
      for (int i = 0; i < waves; ++i) {
        const double k = 2.0 * std::numbers::pi / wl(rng);
        const double a = angle(rng);
        Wave w{k * std::cos(a), k * std::sin(a), angle(rng), amp(rng)};
        total += w.amp;
        ws.push_back(w);
      }
      for (auto& w : ws) w.amp *= 0.45 / total;
      waves_.push_back(std::move(ws));
    }
  }

  double operator()(double x, double y, int c) const {
    double v = 0.5;
    for (const auto& w : waves_[c]) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
  }

  int channels() const noexcept { return channels_; }

  /// Raster of the texture sampled at (x + dx(x, y), y).
  template <class Shift>
  ImageBuffer render(int width, int height, Shift&& dx) const {
    ImageBuffer img(width, height, channels_);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < channels_; ++c) img(x, y, c) = (*this)(x + dx(x, y), y, c);
    return img;
  }

 private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  int channels_;
  std::vector<std::vector<Wave>> waves_;
};

/// Rectified pair with a known disparity field.
struct StereoScene {
  ImageBuffer left;
  ImageBuffer right;
  DisparityMap disparity;  // ground truth (or evaluation point for gradient checks)
  StereoRig rig;
};

inline StereoRig default_rig(int width, int height) {
  return {Intrinsics{0.58 * width, 1.92 * height, 0.5 * width, 0.5 * height, width, height}, 0.54};
}

/// Left = texture, right(u, y) = texture(u + d0, y): left pixel x matches
/// right pixel x - d0 exactly.
inline StereoScene make_shifted_scene(int width, int height, double d0, std::uint64_t seed, int channels = 3) {
  const SmoothTexture tex(seed, channels);
  StereoScene s;
  s.left = tex.render(width, height, [](int, int) { return 0.0; });
  s.right = tex.render(width, height, [d0](int, int) { return d0; });
  s.disparity = DisparityMap(width, height, d0);
  s.rig = default_rig(width, height);
  return s;
}

/// Textured pair plus a smooth, non-constant disparity field around `base`,
/// for gradient checks away from any optimum.
inline StereoScene make_smooth_scene(int width, int height, std::uint64_t seed, double base = 3.0, int channels = 3) {
  const SmoothTexture tex(seed, channels);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  const double p1 = u(rng), p2 = u(rng), p3 = u(rng);
  auto field = [=](int x, int y) {
    return base + 0.8 * std::sin(0.21 * x + p1) + 0.6 * std::cos(0.17 * y + p2) + 0.3 * std::sin(0.11 * (x + y) + p3);
  };
  StereoScene s;
  s.left = tex.render(width, height, [](int, int) { return 0.0; });
  // right view generated from a slightly different field, so the evaluation
  // point is not an optimum
  s.right = tex.render(width, height, [&](int x, int y) { return field(x, y) + 0.35 * std::sin(0.3 * y + p3); });
  s.disparity = DisparityMap(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) s.disparity(x, y) = field(x, y);
  s.rig = default_rig(width, height);
  return s;
}

/// Textureless pair: both images constant.
inline StereoScene make_flat_scene(int width, int height, double value = 0.5, double disparity = 2.0, int channels = 3) {
  StereoScene s;
  s.left = ImageBuffer(width, height, channels, value);
  s.right = ImageBuffer(width, height, channels, value);
  s.disparity = DisparityMap(width, height, disparity);
  s.rig = default_rig(width, height);
  return s;
}

}  // namespace pld::synthetic
