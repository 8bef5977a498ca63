#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "pld/image.hpp"

namespace pld {

namespace detail {

struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;
};

// Clamp-to-edge lattice lookup for a continuous coordinate.
inline BilinearTap bilinear_tap(int width, int height, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  BilinearTap t{};
  t.x0 = static_cast<int>(std::floor(x));
  t.y0 = static_cast<int>(std::floor(y));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = x - t.x0;
  t.fy = y - t.y0;
  return t;
}

inline void check_channel(int channel, int channels) {
  if (channel < 0 || channel >= channels)
    throw ArgumentError("channel " + std::to_string(channel) + " out of range [0, " +
                        std::to_string(channels) + ")");
}

}  // namespace detail

/// Bilinear interpolation at a continuous pixel coordinate; coordinates
/// outside the frame are clamped to the border.
template <class T>
double bilinear_sample(const Image<T>& img, double x, double y, int channel) {
  detail::check_channel(channel, img.channels());
  const auto t = detail::bilinear_tap(img.width(), img.height(), x, y);
  const double v00 = img(t.x0, t.y0, channel);
  const double v10 = img(t.x1, t.y0, channel);
  const double v01 = img(t.x0, t.y1, channel);
  const double v11 = img(t.x1, t.y1, channel);
  const double top = v00 + t.fx * (v10 - v00);
  const double bottom = v01 + t.fx * (v11 - v01);
  return top + t.fy * (bottom - top);
}

/// d/dx of bilinear_sample. Zero where the coordinate is clamped (outside
/// [0, W-1)); at lattice points the right-hand slope is returned.
template <class T>
double bilinear_sample_dx(const Image<T>& img, double x, double y, int channel) {
  detail::check_channel(channel, img.channels());
  if (x < 0.0 || x >= img.width() - 1) return 0.0;
  const auto t = detail::bilinear_tap(img.width(), img.height(), x, y);
  const double top = img(t.x1, t.y0, channel) - img(t.x0, t.y0, channel);
  const double bottom = img(t.x1, t.y1, channel) - img(t.x0, t.y1, channel);
  return top + t.fy * (bottom - top);
}

/// True when (x, y) lies inside [0, W-1] x [0, H-1], widened by `slack`.
inline bool in_frame(int width, int height, double x, double y, double slack = 0.0) {
  return x >= -slack && y >= -slack && x <= width - 1 + slack && y <= height - 1 + slack;
}

/// Forward differences per channel; the last column (for d/dx) and last row
/// (for d/dy) are zero.
template <class T>
std::pair<Image<T>, Image<T>> spatial_gradient(const Image<T>& img) {
  if (img.width() < 2 || img.height() < 2)
    throw ArgumentError("spatial_gradient: image must be at least 2x2");
  Image<T> gx(img.width(), img.height(), img.channels());
  Image<T> gy(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        if (x + 1 < img.width()) gx(x, y, c) = img(x + 1, y, c) - img(x, y, c);
        if (y + 1 < img.height()) gy(x, y, c) = img(x, y + 1, c) - img(x, y, c);
      }
  return {std::move(gx), std::move(gy)};
}

/// Bilinear resampling with corner-aligned mapping: output pixel x maps to
/// input coordinate x * (W_in - 1) / (W_out - 1). Same-size resize is the
/// identity.
template <class T>
Image<T> resize_bilinear(const Image<T>& img, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw ArgumentError("resize_bilinear: target size must be >= 1");
  if (img.same_size(new_w, new_h)) return img;
  Image<T> out(new_w, new_h, img.channels());
  const double sx = new_w > 1 ? static_cast<double>(img.width() - 1) / (new_w - 1) : 0.0;
  const double sy = new_h > 1 ? static_cast<double>(img.height() - 1) / (new_h - 1) : 0.0;
  for (int y = 0; y < new_h; ++y) {
    for (int x = 0; x < new_w; ++x) {
      const auto t = detail::bilinear_tap(img.width(), img.height(), x * sx, y * sy);
      for (int c = 0; c < img.channels(); ++c) {
        const double v00 = img(t.x0, t.y0, c), v10 = img(t.x1, t.y0, c);
        const double v01 = img(t.x0, t.y1, c), v11 = img(t.x1, t.y1, c);
        const double top = v00 + t.fx * (v10 - v00);
        const double bottom = v01 + t.fx * (v11 - v01);
        out(x, y, c) = static_cast<T>(top + t.fy * (bottom - top));
      }
    }
  }
  return out;
}

/// Mirror columns: out(x, y) = in(W - 1 - x, y).
template <class T>
Image<T> hflip(const Image<T>& img) {
  Image<T> out(img.width(), img.height(), img.channels());
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out(x, y, c) = img(w - 1 - x, y, c);
  return out;
}

/// Luma with fixed 0.299/0.587/0.114 weights. Single-channel input is
/// returned unchanged; any other channel count is an error.
template <class T>
Image<T> to_grayscale(const Image<T>& img) {
  if (img.channels() == 1) return img;
  if (img.channels() < 3) throw ArgumentError("to_grayscale: need 1 or >= 3 channels");
  Image<T> out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(x, y) = static_cast<T>(0.299 * img(x, y, 0) + 0.587 * img(x, y, 1) + 0.114 * img(x, y, 2));
  return out;
}

/// 2x2 box average producing ceil(W/2) x ceil(H/2); odd borders replicate.
template <class T>
Image<T> downsample_half(const Image<T>& img) {
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  Image<T> out(w, h, img.channels());
  for (int y = 0; y < h; ++y) {
    const int ya = 2 * y, yb = std::min(2 * y + 1, img.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int xa = 2 * x, xb = std::min(2 * x + 1, img.width() - 1);
      for (int c = 0; c < img.channels(); ++c)
        out(x, y, c) = static_cast<T>(
            0.25 * (static_cast<double>(img(xa, ya, c)) + img(xb, ya, c) + img(xa, yb, c) + img(xb, yb, c)));
    }
  }
  return out;
}

/// Concatenate channels of two same-size images: a's channels first.
template <class T>
Image<T> stack_channels(const Image<T>& a, const Image<T>& b) {
  if (!a.same_size(b.width(), b.height())) throw ArgumentError("stack_channels: size mismatch");
  Image<T> out(a.width(), a.height(), a.channels() + b.channels());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) out(x, y, c) = a(x, y, c);
      for (int c = 0; c < b.channels(); ++c) out(x, y, a.channels() + c) = b(x, y, c);
    }
  return out;
}

}  // namespace pld
