#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pld/error.hpp"

namespace pld {

enum class LayerKind {
  conv2d,
  batchnorm,
  relu,
  maxpool,
  basic_block,
  upsample_nearest,
  sigmoid,
  concat_skip,
  elu,
};

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "Conv2d";
    case LayerKind::batchnorm: return "BatchNorm2d";
    case LayerKind::relu: return "ReLU";
    case LayerKind::maxpool: return "MaxPool2d";
    case LayerKind::basic_block: return "BasicBlock";
    case LayerKind::upsample_nearest: return "Upsample";
    case LayerKind::sigmoid: return "Sigmoid";
    case LayerKind::concat_skip: return "ConcatSkip";
    case LayerKind::elu: return "ELU";
  }
  return "?";
}

enum class PadMode { zeros, reflect };

/// One layer. Basic blocks carry their sub-layers in `children`
/// (conv1, bn1, relu1, conv2, bn2, optional downsample conv + bn, relu2).
/// `skip_from` names the tapped layer a concat_skip appends.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;
  int out_channels = 0;
  std::array<int, 2> kernel{1, 1};   // (h, w)
  std::array<int, 2> stride{1, 1};   // (h, w)
  std::array<int, 2> padding{0, 0};  // (h, w)
  bool has_bias = false;
  PadMode pad_mode = PadMode::zeros;
  int scale = 2;  // upsample factor
  std::string skip_from;
  bool tap = false;  // output kept for skip connections / feature pyramid
  std::vector<LayerSpec> children;
};

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "[1, " + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " + std::to_string(s.width) + "]";
}

/// Ordered layer list with skip topology. Input normalization (x - mean) / std
/// is applied before the first layer when `normalize_input` is set.
struct ArchSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;
  bool normalize_input = false;
  double input_mean = 0.45;
  double input_std = 0.225;
};

namespace arch {

inline LayerSpec conv(std::string name, int in, int out, int k, int stride, int pad, bool bias = false,
                      PadMode mode = PadMode::zeros) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv2d;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = {k, k};
  l.stride = {stride, stride};
  l.padding = {pad, pad};
  l.has_bias = bias;
  l.pad_mode = mode;
  return l;
}

inline LayerSpec batchnorm(std::string name, int ch) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::batchnorm;
  l.in_channels = l.out_channels = ch;
  return l;
}

inline LayerSpec simple(std::string name, LayerKind kind, int ch) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.in_channels = l.out_channels = ch;
  return l;
}

inline LayerSpec maxpool(std::string name, int ch, int k, int stride, int pad) {
  LayerSpec l = simple(std::move(name), LayerKind::maxpool, ch);
  l.kernel = {k, k};
  l.stride = {stride, stride};
  l.padding = {pad, pad};
  return l;
}

inline LayerSpec basic_block(const std::string& name, int in, int out, int stride) {
  LayerSpec b;
  b.name = name;
  b.kind = LayerKind::basic_block;
  b.in_channels = in;
  b.out_channels = out;
  b.stride = {stride, stride};
  b.children.push_back(conv(name + ".conv1", in, out, 3, stride, 1));
  b.children.push_back(batchnorm(name + ".bn1", out));
  b.children.push_back(simple(name + ".relu1", LayerKind::relu, out));
  b.children.push_back(conv(name + ".conv2", out, out, 3, 1, 1));
  b.children.push_back(batchnorm(name + ".bn2", out));
  if (stride != 1 || in != out) {
    b.children.push_back(conv(name + ".downsample.0", in, out, 1, stride, 0));
    b.children.push_back(batchnorm(name + ".downsample.1", out));
  }
  b.children.push_back(simple(name + ".relu2", LayerKind::relu, out));
  return b;
}

inline constexpr std::array<int, 5> kEncoderChannels{64, 64, 128, 256, 512};
inline constexpr std::array<int, 5> kDecoderChannels{16, 32, 64, 128, 256};

}  // namespace arch

/// 18-layer residual encoder. The first convolution takes 6 channels (left
/// then right image) when `stereo_input`, else 3.
inline ArchSpec build_encoder(bool stereo_input, int height = 192, int width = 640) {
  using namespace arch;
  ArchSpec spec;
  const int in = stereo_input ? 6 : 3;
  spec.input_shape = {in, height, width};
  spec.normalize_input = true;
  spec.layers.push_back(conv("enc.conv1", in, 64, 7, 2, 3));
  spec.layers.push_back(batchnorm("enc.bn1", 64));
  spec.layers.push_back(simple("enc.relu", LayerKind::relu, 64));
  spec.layers.back().tap = true;
  spec.layers.push_back(maxpool("enc.maxpool", 64, 3, 2, 1));
  int ch = 64;
  for (int stage = 1; stage <= 4; ++stage) {
    const int out = kEncoderChannels[stage];
    const int stride = stage == 1 ? 1 : 2;
    const std::string base = "enc.layer" + std::to_string(stage);
    spec.layers.push_back(basic_block(base + ".0", ch, out, stride));
    spec.layers.push_back(basic_block(base + ".1", out, out, 1));
    spec.layers.back().tap = true;
    ch = out;
  }
  return spec;
}

/// Encoder plus a U-shaped decoder: five stages of (3x3 conv + ELU, nearest
/// x2 upsample, skip concatenation, 3x3 conv + ELU) with 256/128/64/32/16
/// channels, then a 3x3 conv to one channel and a sigmoid. Decoder convs use
/// reflection padding and biases.
inline ArchSpec build_depth_net(bool stereo_input, int height = 192, int width = 640) {
  using namespace arch;
  ArchSpec spec = build_encoder(stereo_input, height, width);
  static const std::array<const char*, 5> taps{"enc.relu", "enc.layer1.1", "enc.layer2.1", "enc.layer3.1",
                                               "enc.layer4.1"};
  int ch = kEncoderChannels[4];
  for (int i = 4; i >= 0; --i) {
    const std::string s = std::to_string(i);
    const int out = kDecoderChannels[i];
    spec.layers.push_back(conv("dec.upconv." + s + ".0", ch, out, 3, 1, 1, true, PadMode::reflect));
    spec.layers.push_back(simple("dec.upconv." + s + ".0.elu", LayerKind::elu, out));
    spec.layers.push_back(simple("dec.upsample." + s, LayerKind::upsample_nearest, out));
    ch = out;
    if (i > 0) {
      LayerSpec cat = simple("dec.skip." + s, LayerKind::concat_skip, ch);
      cat.skip_from = taps[i - 1];
      cat.out_channels = ch + kEncoderChannels[i - 1];
      spec.layers.push_back(cat);
      ch = cat.out_channels;
    }
    spec.layers.push_back(conv("dec.upconv." + s + ".1", ch, out, 3, 1, 1, true, PadMode::reflect));
    spec.layers.push_back(simple("dec.upconv." + s + ".1.elu", LayerKind::elu, out));
    ch = out;
  }
  spec.layers.push_back(conv("dec.dispconv.0", ch, 1, 3, 1, 1, true, PadMode::reflect));
  spec.layers.push_back(simple("dec.sigmoid", LayerKind::sigmoid, 1));
  return spec;
}

/// Trainable parameter count of one layer (recursing into blocks).
inline std::int64_t layer_params(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv2d:
      return static_cast<std::int64_t>(l.in_channels) * l.out_channels * l.kernel[0] * l.kernel[1] +
             (l.has_bias ? l.out_channels : 0);
    case LayerKind::batchnorm:
      return 2 * static_cast<std::int64_t>(l.out_channels);
    case LayerKind::basic_block: {
      std::int64_t n = 0;
      for (const auto& c : l.children) n += layer_params(c);
      return n;
    }
    default:
      return 0;
  }
}

struct LayerParams {
  std::string name;
  LayerKind kind;
  std::int64_t params;
};

struct ParamReport {
  std::int64_t total = 0;
  std::vector<LayerParams> layers;  // top-level layers in order
};

inline ParamReport param_count(const ArchSpec& spec) {
  ParamReport r;
  for (const auto& l : spec.layers) {
    const auto n = layer_params(l);
    r.layers.push_back({l.name, l.kind, n});
    r.total += n;
  }
  return r;
}

/// Leaf-layer census (blocks counted themselves and through their children).
struct LayerCensus {
  int conv2d = 0;
  int batchnorm = 0;
  int relu = 0;
  int maxpool = 0;
  int basic_block = 0;
  int other = 0;
};

inline void census_add(LayerCensus& c, const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv2d: ++c.conv2d; break;
    case LayerKind::batchnorm: ++c.batchnorm; break;
    case LayerKind::relu: ++c.relu; break;
    case LayerKind::maxpool: ++c.maxpool; break;
    case LayerKind::basic_block:
      ++c.basic_block;
      for (const auto& ch : l.children) census_add(c, ch);
      break;
    default: ++c.other; break;
  }
}

inline LayerCensus layer_census(const ArchSpec& spec) {
  LayerCensus c;
  for (const auto& l : spec.layers) census_add(c, l);
  return c;
}

namespace detail {

inline int conv_out(int in, int k, int s, int p) {
  const int num = in + 2 * p - k;
  if (num < 0) return 0;
  return num / s + 1;
}

inline Shape layer_output_shape(const LayerSpec& l, const Shape& in, const std::map<std::string, Shape>& tapped) {
  auto require_channels = [&](int c) {
    if (in.channels != c)
      throw ShapeError(l.name, "expects " + std::to_string(c) + " input channels, got " + std::to_string(in.channels));
  };
  Shape out = in;
  switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::maxpool:
      require_channels(l.in_channels);
      if (l.kernel[0] < 1 || l.kernel[1] < 1 || l.stride[0] < 1 || l.stride[1] < 1)
        throw ShapeError(l.name, "kernel and stride must be >= 1");
      out = {l.out_channels, conv_out(in.height, l.kernel[0], l.stride[0], l.padding[0]),
             conv_out(in.width, l.kernel[1], l.stride[1], l.padding[1])};
      break;
    case LayerKind::basic_block: {
      require_channels(l.in_channels);
      Shape s = in;
      for (const auto& c : l.children) {
        if (c.name.find(".downsample.") != std::string::npos) continue;
        s = layer_output_shape(c, s, tapped);
      }
      out = s;
      break;
    }
    case LayerKind::upsample_nearest:
      out = {in.channels, in.height * l.scale, in.width * l.scale};
      break;
    case LayerKind::concat_skip: {
      const auto it = tapped.find(l.skip_from);
      if (it == tapped.end()) throw ShapeError(l.name, "skip source '" + l.skip_from + "' not available");
      if (it->second.height != in.height || it->second.width != in.width)
        throw ShapeError(l.name, "skip source spatial size " + to_string(it->second) + " differs from " + to_string(in));
      out = {in.channels + it->second.channels, in.height, in.width};
      if (l.out_channels && out.channels != l.out_channels)
        throw ShapeError(l.name, "concatenated channel count mismatch");
      break;
    }
    case LayerKind::batchnorm:
      require_channels(l.in_channels);
      break;
    default:
      break;
  }
  if (out.height < 1 || out.width < 1)
    throw ShapeError(l.name, "non-positive spatial output " + std::to_string(out.height) + "x" +
                                 std::to_string(out.width));
  return out;
}

}  // namespace detail

struct LayerShape {
  std::string name;
  LayerKind kind;
  Shape output;
};

/// Output shape of every top-level layer for the spec's input shape.
inline std::vector<LayerShape> propagate_shapes(const ArchSpec& spec) {
  std::vector<LayerShape> out;
  std::map<std::string, Shape> tapped;
  Shape s = spec.input_shape;
  if (s.channels < 1 || s.height < 1 || s.width < 1) throw ShapeError("input", "input shape must be positive");
  for (const auto& l : spec.layers) {
    s = detail::layer_output_shape(l, s, tapped);
    if (l.tap) tapped[l.name] = s;
    out.push_back({l.name, l.kind, s});
  }
  return out;
}

/// Named parameter tensors every parameterized layer needs, with dims.
/// Convs: `.weight` (out, in, kh, kw) and `.bias` (out) when biased.
/// Batchnorm: `.weight`, `.bias`, `.running_mean`, `.running_var` (C).
inline std::vector<std::pair<std::string, std::vector<std::uint32_t>>> required_tensors(const ArchSpec& spec) {
  std::vector<std::pair<std::string, std::vector<std::uint32_t>>> out;
  auto visit = [&](auto&& self, const LayerSpec& l) -> void {
    const auto oc = static_cast<std::uint32_t>(l.out_channels);
    switch (l.kind) {
      case LayerKind::conv2d:
        out.push_back({l.name + ".weight",
                       {oc, static_cast<std::uint32_t>(l.in_channels), static_cast<std::uint32_t>(l.kernel[0]),
                        static_cast<std::uint32_t>(l.kernel[1])}});
        if (l.has_bias) out.push_back({l.name + ".bias", {oc}});
        break;
      case LayerKind::batchnorm:
        for (const char* p : {".weight", ".bias", ".running_mean", ".running_var"}) out.push_back({l.name + p, {oc}});
        break;
      case LayerKind::basic_block:
        for (const auto& c : l.children) self(self, c);
        break;
      default:
        break;
    }
  };
  for (const auto& l : spec.layers) visit(visit, l);
  return out;
}

}  // namespace pld
