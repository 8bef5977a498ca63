#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pld/camera.hpp"
#include "pld/image.hpp"
#include "pld/network.hpp"

namespace pld {

/// Planar CHW activation tensor (batch of one).
template <class T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T{0})
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  T& at(int c, int y, int x) noexcept { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int y, int x) const noexcept { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  Shape shape() const noexcept { return {channels, height, width}; }
};

template <class T, class U>
Tensor<T> to_tensor(const Image<U>& img) {
  Tensor<T> t(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) t.at(c, y, x) = static_cast<T>(img(x, y, c));
  return t;
}

struct WeightTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
};

/// Named float tensors keyed by dotted layer path ("enc.conv1.weight").
class WeightStore {
 public:
  void insert(const std::string& name, WeightTensor t) {
    if (t.data.size() != t.element_count()) throw LoadError("tensor '" + name + "': payload does not match dims");
    if (!tensors_.emplace(name, std::move(t)).second) throw LoadError("duplicate tensor '" + name + "'");
  }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const WeightTensor& at(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("missing weight tensor '" + name + "'");
    return it->second;
  }
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  const std::map<std::string, WeightTensor>& tensors() const noexcept { return tensors_; }

  /// Every parameter the spec needs is present with matching dims.
  void validate_for(const ArchSpec& spec) const {
    for (const auto& [name, dims] : required_tensors(spec)) {
      const auto& t = at(name);
      if (t.dims != dims) {
        std::string want, got;
        for (auto d : dims) want += std::to_string(d) + ",";
        for (auto d : t.dims) got += std::to_string(d) + ",";
        throw LoadError("weight tensor '" + name + "' has dims (" + got + ") expected (" + want + ")");
      }
    }
  }

 private:
  std::map<std::string, WeightTensor> tensors_;
};

/// Weights for `spec` filled deterministically from `seed`: He-style
/// uniform conv weights, unit-variance batchnorm. `zero` gives all-zero
/// tensors (including batchnorm statistics).
inline WeightStore make_weights(const ArchSpec& spec, std::uint64_t seed, bool zero = false) {
  WeightStore ws;
  std::mt19937_64 rng(seed);
  for (const auto& [name, dims] : required_tensors(spec)) {
    WeightTensor t{dims, {}};
    t.data.assign(t.element_count(), 0.0f);
    if (!zero) {
      const auto ends_with = [&](const char* s) {
        const std::string suf(s);
        return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
      };
      const bool is_bn = name.find("bn") != std::string::npos || name.find("downsample.1") != std::string::npos;
      if (dims.size() == 4) {
        const double fan_in = static_cast<double>(dims[1]) * dims[2] * dims[3];
        std::uniform_real_distribution<float> u(static_cast<float>(-std::sqrt(3.0 / fan_in)),
                                                static_cast<float>(std::sqrt(3.0 / fan_in)));
        for (auto& v : t.data) v = u(rng);
      } else if (is_bn && ends_with(".weight")) {
        std::fill(t.data.begin(), t.data.end(), 1.0f);
      } else if (is_bn && ends_with(".running_var")) {
        std::fill(t.data.begin(), t.data.end(), 1.0f);
      } else if (ends_with(".bias") && !is_bn) {
        std::uniform_real_distribution<float> u(-0.01f, 0.01f);
        for (auto& v : t.data) v = u(rng);
      }
    }
    ws.insert(name, std::move(t));
  }
  return ws;
}

namespace detail {

inline int reflect_pad_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace detail

/// 2-D convolution (cross-correlation, PyTorch layout) through an im2col
/// patch matrix and a GEMM.
template <class T>
Tensor<T> conv2d(const Tensor<T>& in, const LayerSpec& l, const WeightTensor& weight, const WeightTensor* bias) {
  const int kh = l.kernel[0], kw = l.kernel[1], sh = l.stride[0], sw = l.stride[1];
  const int ph = l.padding[0], pw = l.padding[1];
  const int oh = detail::conv_out(in.height, kh, sh, ph);
  const int ow = detail::conv_out(in.width, kw, sw, pw);
  if (oh < 1 || ow < 1) throw ShapeError(l.name, "non-positive conv output");
  if (in.channels != l.in_channels) throw ShapeError(l.name, "input channel mismatch");
  const int K = in.channels * kh * kw;
  const std::size_t P = static_cast<std::size_t>(oh) * ow;

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat cols(K, static_cast<Eigen::Index>(P));
  for (int c = 0; c < in.channels; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols.row((c * kh + ky) * kw + kx).data();
        for (int y = 0; y < oh; ++y) {
          int iy = y * sh - ph + ky;
          const bool row_out = iy < 0 || iy >= in.height;
          if (row_out && l.pad_mode == PadMode::reflect) iy = detail::reflect_pad_index(iy, in.height);
          for (int x = 0; x < ow; ++x) {
            int ix = x * sw - pw + kx;
            T v{0};
            if (l.pad_mode == PadMode::reflect) {
              v = in.at(c, iy, detail::reflect_pad_index(ix, in.width));
            } else if (!row_out && ix >= 0 && ix < in.width) {
              v = in.at(c, iy, ix);
            }
            row[static_cast<std::size_t>(y) * ow + x] = v;
          }
        }
      }

  Mat w(l.out_channels, K);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(weight.data[static_cast<std::size_t>(i)]);

  Tensor<T> out(l.out_channels, oh, ow);
  Eigen::Map<Mat> result(out.data.data(), l.out_channels, static_cast<Eigen::Index>(P));
  result.noalias() = w * cols;
  if (bias)
    for (int o = 0; o < l.out_channels; ++o) result.row(o).array() += static_cast<T>(bias->data[o]);
  return out;
}

namespace detail {

template <class T>
void batchnorm_inplace(Tensor<T>& t, const LayerSpec& l, const WeightStore& ws) {
  const auto& gamma = ws.at(l.name + ".weight").data;
  const auto& beta = ws.at(l.name + ".bias").data;
  const auto& mean = ws.at(l.name + ".running_mean").data;
  const auto& var = ws.at(l.name + ".running_var").data;
  constexpr double eps = 1e-5;
  for (int c = 0; c < t.channels; ++c) {
    const T scale = static_cast<T>(gamma[c] / std::sqrt(static_cast<double>(var[c]) + eps));
    const T shift = static_cast<T>(beta[c] - mean[c] * static_cast<double>(scale));
    T* p = t.data.data() + c * t.plane();
    for (std::size_t i = 0; i < t.plane(); ++i) p[i] = p[i] * scale + shift;
  }
}

template <class T>
Tensor<T> maxpool(const Tensor<T>& in, const LayerSpec& l) {
  const int oh = conv_out(in.height, l.kernel[0], l.stride[0], l.padding[0]);
  const int ow = conv_out(in.width, l.kernel[1], l.stride[1], l.padding[1]);
  Tensor<T> out(in.channels, oh, ow);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        T m = -std::numeric_limits<T>::infinity();
        for (int ky = 0; ky < l.kernel[0]; ++ky) {
          const int iy = y * l.stride[0] - l.padding[0] + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < l.kernel[1]; ++kx) {
            const int ix = x * l.stride[1] - l.padding[1] + kx;
            if (ix >= 0 && ix < in.width) m = std::max(m, in.at(c, iy, ix));
          }
        }
        out.at(c, y, x) = m;
      }
  return out;
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int scale) {
  Tensor<T> out(in.channels, in.height * scale, in.width * scale);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / scale, x / scale);
  return out;
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

template <class T>
Tensor<T> run_layer(const Tensor<T>& x, const LayerSpec& l, const WeightStore& ws,
                    const std::map<std::string, Tensor<T>>& tapped) {
  switch (l.kind) {
    case LayerKind::conv2d: {
      const auto& w = ws.at(l.name + ".weight");
      const WeightTensor* b = l.has_bias ? &ws.at(l.name + ".bias") : nullptr;
      return conv2d(x, l, w, b);
    }
    case LayerKind::batchnorm: {
      Tensor<T> y = x;
      batchnorm_inplace(y, l, ws);
      return y;
    }
    case LayerKind::relu: {
      Tensor<T> y = x;
      for (auto& v : y.data) v = std::max(v, T{0});
      return y;
    }
    case LayerKind::elu: {
      Tensor<T> y = x;
      for (auto& v : y.data) v = v > T{0} ? v : std::expm1(v);
      return y;
    }
    case LayerKind::sigmoid: {
      Tensor<T> y = x;
      // keep the output strictly inside (0, 1) even where T saturates
      const T lo = std::numeric_limits<T>::min();
      const T hi = std::nextafter(T{1}, T{0});
      for (auto& v : y.data) v = std::clamp(static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))), lo, hi);
      return y;
    }
    case LayerKind::maxpool:
      return maxpool(x, l);
    case LayerKind::upsample_nearest:
      return upsample_nearest(x, l.scale);
    case LayerKind::concat_skip: {
      const auto it = tapped.find(l.skip_from);
      if (it == tapped.end()) throw ShapeError(l.name, "skip source '" + l.skip_from + "' not computed");
      return concat(x, it->second);
    }
    case LayerKind::basic_block: {
      Tensor<T> y = x;
      Tensor<T> identity = x;
      bool has_down = false;
      for (const auto& c : l.children) {
        if (c.name.find(".downsample.") != std::string::npos) {
          identity = run_layer(identity, c, ws, tapped);
          has_down = true;
        } else if (c.name.size() > 6 && c.name.compare(c.name.size() - 6, 6, ".relu2") == 0) {
          if (!has_down && identity.data.size() != y.data.size())
            throw ShapeError(l.name, "residual shape mismatch without downsample");
          for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::max(y.data[i] + identity.data[i], T{0});
        } else {
          y = run_layer(y, c, ws, tapped);
        }
      }
      return y;
    }
  }
  throw ShapeError(l.name, "unsupported layer kind");
}

}  // namespace detail

/// Output of the final layer plus every tapped activation (the encoder
/// feature pyramid for the depth network).
template <class T>
struct TensorForward {
  Tensor<T> output;
  std::vector<Tensor<T>> features;
};

/// Run every layer of `spec` on a CHW tensor.
template <class T>
TensorForward<T> forward_tensor(const ArchSpec& spec, const WeightStore& weights, Tensor<T> x) {
  if (x.shape() != spec.input_shape)
    throw ShapeError("input", "input " + to_string(x.shape()) + " does not match spec " + to_string(spec.input_shape));
  weights.validate_for(spec);
  if (spec.normalize_input) {
    const T mean = static_cast<T>(spec.input_mean), inv = static_cast<T>(1.0 / spec.input_std);
    for (auto& v : x.data) v = (v - mean) * inv;
  }
  std::map<std::string, Tensor<T>> tapped;
  TensorForward<T> r;
  for (const auto& l : spec.layers) {
    x = detail::run_layer(x, l, weights, tapped);
    if (l.tap) {
      tapped[l.name] = x;
      r.features.push_back(x);
    }
  }
  r.output = std::move(x);
  return r;
}

/// Normalized disparity in (0, 1) plus the encoder feature pyramid.
template <class T>
struct ForwardResult {
  Image<T> disparity;
  std::vector<Tensor<T>> features;
};

/// Depth-network inference: input is an interleaved image whose channels and
/// size match the spec (6 channels, left image first, for the stereo net).
template <class T, class U>
ForwardResult<T> forward(const ArchSpec& spec, const WeightStore& weights, const Image<U>& input) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::sigmoid)
    throw ShapeError("output", "forward needs a spec ending in a sigmoid head");
  auto r = forward_tensor<T>(spec, weights, to_tensor<T>(input));
  if (r.output.channels != 1) throw ShapeError("output", "expected a single-channel head");
  ForwardResult<T> out{Image<T>(r.output.width, r.output.height, 1), std::move(r.features)};
  std::copy(r.output.data.begin(), r.output.data.end(), out.disparity.data().begin());
  return out;
}

/// Map a sigmoid output s to disparity in pixels via inverse-depth
/// interpolation 1/z = 1/max + s (1/min - 1/max), then d = b fx / z.
template <class U>
DisparityMap sigmoid_to_disparity(const Image<U>& s, const StereoRig& rig, double min_depth = 0.1,
                                  double max_depth = 100.0) {
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) throw ArgumentError("sigmoid_to_disparity: need 0 < min < max");
  if (s.channels() != 1) throw ArgumentError("sigmoid_to_disparity: expects a single-channel map");
  rig.validate();
  const double lo = 1.0 / max_depth, hi = 1.0 / min_depth;
  const double bf = rig.baseline_m * rig.left.fx;
  DisparityMap d(s.width(), s.height());
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) d(x, y) = bf * (lo + static_cast<double>(s(x, y)) * (hi - lo));
  return d;
}

}  // namespace pld
