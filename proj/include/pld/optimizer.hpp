#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "pld/camera.hpp"
#include "pld/loss.hpp"
#include "pld/sampling.hpp"
#include "pld/synthetic.hpp"

namespace pld {

/// Network-training hyperparameters, kept for reference. No training loop
/// consumes them; the direct optimizer below has its own defaults.
struct TrainingHyperparameters {
  static constexpr double learning_rate = 1e-4;
  static constexpr int batch_size = 12;
  static constexpr int epochs = 20;
  static constexpr int train_images = 39810;
  static constexpr int val_images = 4424;
};

struct OptimizerConfig {
  int levels = 4;               // pyramid depth, factor 2 per level
  int steps_per_level = 300;
  double step_size = 1e-2;      // initial step, per-pixel gradient units
  double init_disparity = 0.0;  // px at the coarsest level
  double convergence_tol = 1e-7;
  double max_disparity_fraction = 0.25;  // d_max = fraction * width
  int max_halvings = 10;
  double step_growth = 2.0;     // step multiplier after an accepted step
  double momentum = 0.0;
  double tie_break_noise = 1e-5;  // std of the auto-mask identity offset
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const {
    if (levels < 1) throw ArgumentError("OptimizerConfig: levels must be >= 1");
    if (steps_per_level < 1) throw ArgumentError("OptimizerConfig: steps_per_level must be >= 1");
    if (!(step_size > 0.0)) throw ArgumentError("OptimizerConfig: step_size must be > 0");
    if (!(max_disparity_fraction > 0.0)) throw ArgumentError("OptimizerConfig: max_disparity_fraction must be > 0");
    if (max_halvings < 0 || !(step_growth >= 1.0)) throw ArgumentError("OptimizerConfig: bad line-search settings");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("OptimizerConfig: momentum must be in [0,1)");
    loss.validate();
  }
};

/// Scalar part of a LossBreakdown recorded per iteration.
struct TraceEntry {
  int level = 0;  // 0 = coarsest
  int step = 0;   // 0 = initial evaluation at this level
  int width = 0;
  int height = 0;
  double step_size = 0.0;
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double masked_fraction = 0.0;
};

struct OptimizationTrace {
  std::vector<TraceEntry> entries;
  DisparityMap final_disparity;
  bool converged = false;
};

struct OptimizationResult {
  DisparityMap disparity;
  OptimizationTrace trace;
};

namespace detail {

inline DisparityMap upsample_disparity(const DisparityMap& d, int width, int height) {
  const double ratio = static_cast<double>(width) / d.width();
  DisparityMap out(resize_bilinear(d.values, width, height));
  for (auto& v : out.values.data()) v *= ratio;
  return out;
}

}  // namespace detail

/// Coarse-to-fine minimization of the stereo loss over a per-pixel disparity
/// field (left image as target, right as source). Each level runs projected
/// gradient descent on [0, d_max] with a backtracking line search; accepted
/// steps strictly decrease the level's loss.
inline OptimizationResult optimize_disparity(const ImageBuffer& left, const ImageBuffer& right, const StereoRig& rig,
                                             const Intrinsics& K, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  rig.validate();
  if (!left.same_shape(right)) throw ArgumentError("optimize_disparity: left/right dimensions differ");
  if (!K.matches(left.width(), left.height())) throw ArgumentError("optimize_disparity: intrinsics resolution mismatch");

  std::vector<ImageBuffer> lp{left}, rp{right};
  const int min_side = cfg.loss.ssim_window / 2 + 2;
  for (int l = 1; l < cfg.levels; ++l) {
    const auto& prev = lp.back();
    if ((prev.width() + 1) / 2 < min_side || (prev.height() + 1) / 2 < min_side) break;
    lp.push_back(downsample_half(prev));
    rp.push_back(downsample_half(rp.back()));
  }
  const int n_levels = static_cast<int>(lp.size());

  OptimizationResult result;
  auto& trace = result.trace;
  DisparityMap d(lp.back().width(), lp.back().height(), cfg.init_disparity);
  bool converged = false;

  for (int li = 0; li < n_levels; ++li) {
    const int pi = n_levels - 1 - li;  // pyramid index, coarsest first
    const ImageBuffer& L = lp[pi];
    const ImageBuffer& R = rp[pi];
    if (li > 0) d = detail::upsample_disparity(d, L.width(), L.height());
    const Intrinsics Kl = K.scaled(L.width(), L.height());
    const StereoRig rig_l{rig.left.scaled(L.width(), L.height()), rig.baseline_m};
    StereoObjective obj(L, {SourceView{std::cref(R), +1}}, rig_l, Kl, cfg.loss);
    if (cfg.loss.automask_enabled && cfg.tie_break_noise > 0.0) {
      std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(li));
      std::normal_distribution<double> nd(0.0, cfg.tie_break_noise);
      ImageBuffer noise(L.width(), L.height(), 1);
      for (auto& v : noise.data()) v = nd(rng);
      obj.set_identity_offset(std::move(noise));
    }
    const double d_max = cfg.max_disparity_fraction * L.width();
    for (auto& v : d.values.data()) v = std::clamp(v, 0.0, d_max);
    const double n = static_cast<double>(L.pixel_count());

    auto record = [&](int step, double step_size, const LossBreakdown& b) {
      trace.entries.push_back(
          {li, step, L.width(), L.height(), step_size, b.total, b.photometric, b.smoothness, b.masked_fraction});
    };

    LossEvaluation ev = obj.evaluate(d);
    record(0, 0.0, ev.breakdown);
    double step = cfg.step_size;
    std::vector<double> velocity(L.pixel_count(), 0.0);
    converged = false;

    for (int it = 1; it <= cfg.steps_per_level; ++it) {
      const ImageBuffer g = obj.gradient(d, ev);
      std::vector<double> dir(g.size());
      bool any = false;
      for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i] = n * g.data()[i] + cfg.momentum * velocity[i];
        any = any || dir[i] != 0.0;
      }
      if (!any) {
        converged = true;
        break;
      }
      bool accepted = false;
      DisparityMap cand = d;
      LossEvaluation cand_ev;
      for (int h = 0; h <= cfg.max_halvings; ++h) {
        auto cv = cand.values.data();
        auto dv = d.values.data();
        for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = std::clamp(dv[i] - step * dir[i], 0.0, d_max);
        cand_ev = obj.evaluate(cand);
        if (cand_ev.breakdown.total < ev.breakdown.total) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        converged = true;
        break;
      }
      const double prev = ev.breakdown.total;
      for (std::size_t i = 0; i < velocity.size(); ++i) velocity[i] = dir[i];
      d = std::move(cand);
      ev = std::move(cand_ev);
      record(it, step, ev.breakdown);
      step *= cfg.step_growth;
      const double rel = (prev - ev.breakdown.total) / std::max(std::abs(prev), std::numeric_limits<double>::min());
      if (rel < cfg.convergence_tol) {
        converged = true;
        break;
      }
    }
  }
  trace.converged = converged;
  trace.final_disparity = d;
  result.disparity = std::move(d);
  return result;
}

inline OptimizationResult optimize_disparity(const ImageBuffer& left, const ImageBuffer& right, const StereoRig& rig,
                                             const OptimizerConfig& cfg = {}) {
  return optimize_disparity(left, right, rig, rig.left, cfg);
}

struct GradientCheckReport {
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;     // candidates rejected as too close to a kink
  bool degenerate = false;  // every analytic and numeric value below the floor
};

/// Compare the analytic gradient with central finite differences at random
/// interior pixels. Masks are frozen at the base point; pixels whose stencil
/// would cross a non-differentiable point are redrawn.
inline GradientCheckReport check_gradients(const synthetic::StereoScene& scene, const LossConfig& cfg, int n_pixels,
                                           std::uint64_t seed = 1, double h = 1e-4, double floor = 1e-8) {
  if (n_pixels < 1) throw ArgumentError("check_gradients: n_pixels must be >= 1");
  const ImageBuffer& L = scene.left;
  const ImageBuffer& R = scene.right;
  StereoObjective obj(L, {SourceView{std::cref(R), +1}}, scene.rig, scene.rig.left, cfg);
  const DisparityMap& d = scene.disparity;
  const LossEvaluation ev = obj.evaluate(d);
  const ImageBuffer g = obj.gradient(d, ev);
  const int w = L.width(), hgt = L.height(), ch = L.channels();
  const int margin = cfg.ssim_window / 2 + 1;
  if (w <= 2 * margin || hgt <= 2 * margin) throw ArgumentError("check_gradients: scene too small");

  auto smooth_at = [&](int x, int y) {
    const double v = d(x, y);
    const double sx = x - v;
    if (sx <= 2 * h || sx >= w - 1 - 2 * h) return false;
    const double frac = sx - std::floor(sx);
    if (frac < 2 * h || frac > 1.0 - 2 * h) {
      for (int c = 0; c < ch; ++c)
        if (bilinear_sample_dx(R, sx - 2 * h, y, c) != bilinear_sample_dx(R, sx + 2 * h, y, c)) return false;
    }
    for (int c = 0; c < ch; ++c) {
      const double r = bilinear_sample(R, sx, y, c);
      const double diff = std::abs(L(x, y, c) - r);
      const double slope = std::abs(bilinear_sample_dx(R, sx, y, c));
      if (diff != 0.0 && diff <= 2 * h * slope + 1e-15) return false;
    }
    const double nbr[4] = {d(x + 1, y) - v, v - d(x - 1, y), d(x, y + 1) - v, v - d(x, y - 1)};
    for (double dd : nbr)
      if (dd != 0.0 && std::abs(dd) <= 2 * h) return false;
    return true;
  };

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(margin, w - 1 - margin), uy(margin, hgt - 1 - margin);
  GradientCheckReport rep;
  std::vector<double> errors;
  bool all_tiny = true;
  const int max_attempts = 50 * n_pixels;
  for (int attempt = 0; attempt < max_attempts && rep.checked < n_pixels; ++attempt) {
    const int x = ux(rng), y = uy(rng);
    if (!smooth_at(x, y)) {
      ++rep.skipped;
      continue;
    }
    DisparityMap dp = d, dm = d;
    dp(x, y) += h;
    dm(x, y) -= h;
    const double fp = obj.evaluate(dp, &ev.masks).breakdown.total;
    const double fm = obj.evaluate(dm, &ev.masks).breakdown.total;
    const double numeric = (fp - fm) / (2 * h);
    const double analytic = g(x, y);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    if (std::max(std::abs(analytic), std::abs(numeric)) >= floor) all_tiny = false;
    errors.push_back(std::abs(analytic - numeric) / scale);
    ++rep.checked;
  }
  if (!errors.empty()) {
    rep.max_rel_error = *std::max_element(errors.begin(), errors.end());
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    rep.median_rel_error = errors[errors.size() / 2];
  }
  rep.degenerate = rep.checked > 0 && all_tiny;
  return rep;
}

}  // namespace pld
