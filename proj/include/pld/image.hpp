#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pld/error.hpp"

namespace pld {

/// Dense raster of `channels` values per pixel.
///
/// Storage is row-major and channel-interleaved: the value for pixel (x, y)
/// and channel c lives at `(y * width + x) * channels + c`. Pixel centers sit
/// on integer coordinates with the origin at the top-left, x to the right and
/// y downward. Constructors reject non-finite values; mutable accessors are
/// trusted not to introduce them.
template <class T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, int channels, T fill = T{0})
      : width_(width), height_(height), channels_(channels) {
    check_dims();
    if (!std::isfinite(static_cast<double>(fill))) throw ArgumentError("Image: non-finite fill value");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  Image(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_dims();
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
      throw ArgumentError("Image: data length " + std::to_string(data_.size()) + " != " +
                          std::to_string(static_cast<std::size_t>(width) * height * channels));
    for (const T v : data_)
      if (!std::isfinite(static_cast<double>(v))) throw ArgumentError("Image: non-finite value");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_size(int w, int h) const noexcept { return width_ == w && height_ == h; }

  template <class U>
  Image<U> cast() const {
    Image<U> out(width_, height_, channels_);
    auto dst = out.data();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    if (width_ < 1 || height_ < 1 || channels_ < 1)
      throw ArgumentError("Image: dimensions must be >= 1 (got " + std::to_string(width_) + "x" +
                          std::to_string(height_) + "x" + std::to_string(channels_) + ")");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Double-precision raster used by every loss and geometry kernel.
using ImageBuffer = Image<double>;
using ImageF = Image<float>;

}  // namespace pld
