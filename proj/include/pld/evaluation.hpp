#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "pld/camera.hpp"
#include "pld/sampling.hpp"

namespace pld {

enum class ScalingMode { none, fixed_factor, median };

struct Scaling {
  ScalingMode mode = ScalingMode::fixed_factor;
  double factor = 1.0;  // used by fixed_factor

  static Scaling none() { return {ScalingMode::none, 1.0}; }
  static Scaling fixed(double c) { return {ScalingMode::fixed_factor, c}; }
  static Scaling median() { return {ScalingMode::median, 1.0}; }

  /// "none", "fixed:<c>" or "median".
  std::string describe() const {
    switch (mode) {
      case ScalingMode::none: return "none";
      case ScalingMode::median: return "median";
      case ScalingMode::fixed_factor: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "fixed:%.17g", factor);
        return buf;
      }
    }
    return "?";
  }

  static Scaling parse(const std::string& s) {
    if (s == "none") return none();
    if (s == "median") return median();
    if (s.rfind("fixed:", 0) == 0) {
      std::size_t used = 0;
      double c = 0.0;
      try {
        c = std::stod(s.substr(6), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size() - 6 || !(c > 0.0) || !std::isfinite(c))
        throw ArgumentError("scaling: bad fixed factor in '" + s + "'");
      return fixed(c);
    }
    throw ArgumentError("scaling: expected none, median or fixed:<c>, got '" + s + "'");
  }
};

/// Pixel rectangle [x0, x1) x [y0, y1).
struct CropRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct EvalConfig {
  double min_depth = 1e-3;
  double max_depth = 80.0;
  Scaling scaling;
  std::optional<CropRect> crop;

  void validate() const {
    if (!(min_depth > 0.0) || !(max_depth > min_depth)) throw ArgumentError("EvalConfig: need 0 < min_depth < max_depth");
    if (scaling.mode == ScalingMode::fixed_factor && !(scaling.factor > 0.0))
      throw ArgumentError("EvalConfig: fixed scale factor must be > 0");
  }
};

struct EvalReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t n_valid = 0;
  std::string scaling;  // echo of the scaling mode applied
};

namespace detail {

inline bool gt_usable(const DepthMap& gt, const EvalConfig& cfg, int x, int y) {
  if (!gt.is_valid(x, y)) return false;
  const double g = gt(x, y);
  if (!(g >= cfg.min_depth && g <= cfg.max_depth)) return false;
  return !cfg.crop || cfg.crop->contains(x, y);
}

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + n / 2);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// none -> identity; fixed(c) -> multiply by c; median -> multiply by
/// median(gt) / median(pred) over pixels usable for evaluation.
inline DepthMap apply_scaling(const DepthMap& pred, const EvalConfig& cfg, const DepthMap* gt = nullptr) {
  DepthMap out = pred;
  switch (cfg.scaling.mode) {
    case ScalingMode::none:
      return out;
    case ScalingMode::fixed_factor:
      for (auto& v : out.values.data()) v *= cfg.scaling.factor;
      return out;
    case ScalingMode::median: {
      if (!gt) throw ArgumentError("apply_scaling: median mode needs ground truth");
      if (!gt->values.same_size(pred.width(), pred.height())) throw ArgumentError("apply_scaling: size mismatch");
      std::vector<double> g, p;
      for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x)
          if (detail::gt_usable(*gt, cfg, x, y) && pred(x, y) > 0.0) {
            g.push_back((*gt)(x, y));
            p.push_back(pred(x, y));
          }
      if (g.empty()) throw EmptyEvaluationError("apply_scaling: no valid ground-truth pixels for median scaling");
      const double ratio = detail::median_of(std::move(g)) / detail::median_of(std::move(p));
      for (auto& v : out.values.data()) v *= ratio;
      return out;
    }
  }
  return out;
}

/// Standard depth metrics over ground-truth pixels that are valid, inside
/// [min_depth, max_depth] and inside the optional crop. Predictions are scaled
/// first, then clamped to [min_depth, max_depth].
inline EvalReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const EvalConfig& cfg = {}) {
  cfg.validate();
  if (!pred.values.same_size(gt.width(), gt.height())) throw ArgumentError("compute_metrics: size mismatch");
  const DepthMap scaled = apply_scaling(pred, cfg, &gt);
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  std::size_t d1 = 0, d2 = 0, d3 = 0, n = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!detail::gt_usable(gt, cfg, x, y)) continue;
      const double g = gt(x, y);
      const double p = std::clamp(scaled(x, y), cfg.min_depth, cfg.max_depth);
      const double diff = p - g;
      abs_rel += std::abs(diff) / g;
      sq_rel += diff * diff / g;
      sq += diff * diff;
      const double dl = std::log(p) - std::log(g);
      sq_log += dl * dl;
      const double ratio = std::max(p / g, g / p);
      d1 += ratio < t1;
      d2 += ratio < t2;
      d3 += ratio < t3;
      ++n;
    }
  if (n == 0) throw EmptyEvaluationError("compute_metrics: no valid ground-truth pixels");
  const double inv = 1.0 / static_cast<double>(n);
  EvalReport r;
  r.abs_rel = abs_rel * inv;
  r.sq_rel = sq_rel * inv;
  r.rmse = std::sqrt(sq * inv);
  r.rmse_log = std::sqrt(sq_log * inv);
  r.delta1 = static_cast<double>(d1) * inv;
  r.delta2 = static_cast<double>(d2) * inv;
  r.delta3 = static_cast<double>(d3) * inv;
  r.n_valid = n;
  r.scaling = cfg.scaling.describe();
  return r;
}

/// Fuse a prediction with the prediction on the mirrored input (still in its
/// mirrored frame). The second map is un-flipped; the leftmost 5% of columns
/// take the mirrored pass, the rightmost 5% the direct pass, with linear ramps
/// over those bands and the plain mean in between.
template <class T>
Image<T> post_process_fuse(const Image<T>& d, const Image<T>& d_flipped_pass) {
  if (!d.same_shape(d_flipped_pass)) throw ArgumentError("post_process_fuse: dimension mismatch");
  const Image<T> back = hflip(d_flipped_pass);
  const int w = d.width();
  std::vector<double> left_w(w);
  for (int x = 0; x < w; ++x) {
    const double l = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
    left_w[x] = 1.0 - std::clamp(20.0 * (l - 0.05), 0.0, 1.0);
  }
  Image<T> out(w, d.height(), d.channels());
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < w; ++x) {
      const double lw = left_w[x], rw = left_w[w - 1 - x];
      for (int c = 0; c < d.channels(); ++c) {
        const double a = d(x, y, c), b = back(x, y, c);
        const double m = 0.5 * (a + b);
        // m + rw (a - m) + lw (b - m) == rw a + lw b + (1 - lw - rw) m
        out(x, y, c) = static_cast<T>(m + rw * (a - m) + lw * (b - m));
      }
    }
  return out;
}

inline DisparityMap post_process_fuse(const DisparityMap& d, const DisparityMap& d_flipped_pass) {
  DisparityMap out(post_process_fuse(d.values, d_flipped_pass.values));
  const int w = d.width();
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.valid[i] = d.valid[i] && d_flipped_pass.valid[static_cast<std::size_t>(y) * w + (w - 1 - x)];
    }
  return out;
}

}  // namespace pld
