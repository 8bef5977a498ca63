#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pld/camera.hpp"
#include "pld/image.hpp"
#include "pld/sampling.hpp"

namespace pld {

struct LossConfig {
  double lambda_smooth = 1e-3;
  double ssim_weight = 0.85;  // alpha
  int ssim_window = 3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  bool automask_enabled = true;

  void validate() const {
    if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) throw ArgumentError("LossConfig: ssim_weight must be in [0,1]");
    if (!(lambda_smooth >= 0.0)) throw ArgumentError("LossConfig: lambda_smooth must be >= 0");
    if (ssim_window < 3 || ssim_window % 2 == 0) throw ArgumentError("LossConfig: ssim_window must be odd and >= 3");
    if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw ArgumentError("LossConfig: SSIM stabilizers must be > 0");
  }
};

struct LossBreakdown {
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double masked_fraction = 0.0;
  ImageBuffer per_pixel_photometric;  // mu * L_p, zero where excluded
};

namespace detail {

inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

inline void check_window(const ImageBuffer& img, int window) {
  const int r = window / 2;
  if (img.width() <= r || img.height() <= r)
    throw ArgumentError("SSIM window " + std::to_string(window) + " too large for " + std::to_string(img.width()) +
                        "x" + std::to_string(img.height()) + " image");
}

// Box mean over a window with reflection padding.
inline ImageBuffer box_filter_reflect(const ImageBuffer& img, int window) {
  const int r = window / 2;
  const double inv = 1.0 / (window * window);
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect_index(y + dy, img.height());
          for (int dx = -r; dx <= r; ++dx) acc += img(reflect_index(x + dx, img.width()), yy, c);
        }
        out(x, y, c) = acc * inv;
      }
  return out;
}

// Adjoint of box_filter_reflect: scatters g(p)/window^2 onto the taps of p.
inline ImageBuffer box_filter_reflect_adjoint(const ImageBuffer& g, int window) {
  const int r = window / 2;
  const double inv = 1.0 / (window * window);
  ImageBuffer out(g.width(), g.height(), g.channels());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x)
      for (int c = 0; c < g.channels(); ++c) {
        const double v = g(x, y, c) * inv;
        if (v == 0.0) continue;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect_index(y + dy, g.height());
          for (int dx = -r; dx <= r; ++dx) out(reflect_index(x + dx, g.width()), yy, c) += v;
        }
      }
  return out;
}

inline ImageBuffer multiply(const ImageBuffer& a, const ImageBuffer& b) {
  ImageBuffer out(a.width(), a.height(), a.channels());
  auto o = out.data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] * db[i];
  return out;
}

// Local statistics shared by the SSIM value and its gradient.
struct SsimStats {
  ImageBuffer mu_a, mu_b, aa, bb, ab;  // box means of a, b, a^2, b^2, ab

  SsimStats(const ImageBuffer& a, const ImageBuffer& b, int window)
      : mu_a(box_filter_reflect(a, window)),
        mu_b(box_filter_reflect(b, window)),
        aa(box_filter_reflect(multiply(a, a), window)),
        bb(box_filter_reflect(multiply(b, b), window)),
        ab(box_filter_reflect(multiply(a, b), window)) {}
};

struct SsimTerms {
  double a1, a2, b1, b2;
};

inline SsimTerms ssim_terms(const SsimStats& s, std::size_t i, double c1, double c2) {
  const double ma = s.mu_a.data()[i], mb = s.mu_b.data()[i];
  const double va = s.aa.data()[i] - ma * ma;
  const double vb = s.bb.data()[i] - mb * mb;
  const double cov = s.ab.data()[i] - ma * mb;
  return {2.0 * ma * mb + c1, 2.0 * cov + c2, ma * ma + mb * mb + c1, va + vb + c2};
}

inline void check_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* who) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(who) + ": image dimensions differ");
}

}  // namespace detail

/// Per-pixel, per-channel SSIM from box-filtered local statistics
/// (reflection padding at the borders).
inline ImageBuffer ssim(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg = {}) {
  cfg.validate();
  detail::check_same_shape(a, b, "ssim");
  detail::check_window(a, cfg.ssim_window);
  const detail::SsimStats s(a, b, cfg.ssim_window);
  ImageBuffer out(a.width(), a.height(), a.channels());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const auto t = detail::ssim_terms(s, i, cfg.ssim_c1, cfg.ssim_c2);
    o[i] = (t.a1 * t.a2) / (t.b1 * t.b2);
  }
  return out;
}

/// RE = mean over channels of alpha/2 * (1 - SSIM) + (1 - alpha) * |target - recon|.
inline ImageBuffer reconstruction_error(const ImageBuffer& target, const ImageBuffer& recon, const LossConfig& cfg = {}) {
  detail::check_same_shape(target, recon, "reconstruction_error");
  const double alpha = cfg.ssim_weight;
  ImageBuffer out(target.width(), target.height(), 1);
  std::optional<ImageBuffer> s;
  if (alpha > 0.0) s = ssim(target, recon, cfg);
  else cfg.validate();
  const int ch = target.channels();
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double l1 = std::abs(target(x, y, c) - recon(x, y, c));
        const double ssim_term = s ? 0.5 * alpha * (1.0 - (*s)(x, y, c)) : 0.0;
        acc += ssim_term + (1.0 - alpha) * l1;
      }
      out(x, y) = acc / ch;
    }
  return out;
}

struct ReprojectionResult {
  ImageBuffer loss;                  // per-pixel min RE; 0 where no source is valid
  std::vector<std::uint8_t> valid;   // at least one valid reconstruction
  std::vector<int> source;           // argmin source index, -1 where invalid
};

/// Per-pixel minimum of RE over the reconstructions that are valid there.
inline ReprojectionResult reprojection_loss(const ImageBuffer& target, std::span<const WarpResult> reconstructions,
                                            const LossConfig& cfg = {}) {
  if (reconstructions.empty()) throw ArgumentError("reprojection_loss: no reconstructions");
  const std::size_t n = target.pixel_count();
  ReprojectionResult r{ImageBuffer(target.width(), target.height(), 1), std::vector<std::uint8_t>(n, 0),
                       std::vector<int>(n, -1)};
  for (std::size_t s = 0; s < reconstructions.size(); ++s) {
    const auto& rec = reconstructions[s];
    if (rec.valid.size() != n) throw ArgumentError("reprojection_loss: validity mask size mismatch");
    const ImageBuffer re = reconstruction_error(target, rec.image, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      if (!rec.valid[i]) continue;
      if (!r.valid[i] || re.data()[i] < r.loss.data()[i]) {
        r.loss.data()[i] = re.data()[i];
        r.valid[i] = 1;
        r.source[i] = static_cast<int>(s);
      }
    }
  }
  return r;
}

/// mu = 1 where the best warped reconstruction beats every unwarped source.
/// `identity_offset`, when given, is added to the unwarped-source error before
/// the comparison (tie-breaking noise).
inline std::vector<std::uint8_t> auto_mask(const ImageBuffer& target, std::span<const WarpResult> warped,
                                           std::span<const ImageBuffer> raw_sources, const LossConfig& cfg = {},
                                           const ImageBuffer* identity_offset = nullptr) {
  const std::size_t n = target.pixel_count();
  if (!cfg.automask_enabled || raw_sources.empty()) return std::vector<std::uint8_t>(n, 1);
  const auto best = reprojection_loss(target, warped, cfg);
  std::vector<double> raw_min(n, std::numeric_limits<double>::infinity());
  for (const auto& src : raw_sources) {
    const ImageBuffer re = reconstruction_error(target, src, cfg);
    for (std::size_t i = 0; i < n; ++i) raw_min[i] = std::min(raw_min[i], re.data()[i]);
  }
  std::vector<std::uint8_t> mu(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double offset = identity_offset ? identity_offset->data()[i] : 0.0;
    mu[i] = best.valid[i] && best.loss.data()[i] < raw_min[i] + offset ? 1 : 0;
  }
  return mu;
}

namespace detail {

// exp(-mean_c |dI|) edge weights for the smoothness term.
struct EdgeWeights {
  ImageBuffer wx, wy;
};

inline EdgeWeights edge_weights(const ImageBuffer& img) {
  auto [gx, gy] = spatial_gradient(img);
  EdgeWeights w{ImageBuffer(img.width(), img.height(), 1), ImageBuffer(img.width(), img.height(), 1)};
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double ax = 0.0, ay = 0.0;
      for (int c = 0; c < ch; ++c) {
        ax += std::abs(gx(x, y, c));
        ay += std::abs(gy(x, y, c));
      }
      w.wx(x, y) = std::exp(-ax / ch);
      w.wy(x, y) = std::exp(-ay / ch);
    }
  return w;
}

// Sum over pixels of wx|dx d| + wy|dy d| (un-normalized disparity).
inline double weighted_tv(const ImageBuffer& d, const EdgeWeights& w) {
  double s = 0.0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      if (x + 1 < d.width()) s += w.wx(x, y) * std::abs(d(x + 1, y) - d(x, y));
      if (y + 1 < d.height()) s += w.wy(x, y) * std::abs(d(x, y + 1) - d(x, y));
    }
  return s;
}

inline double mean_value(const ImageBuffer& d) {
  double s = 0.0;
  for (double v : d.data()) s += v;
  return s / static_cast<double>(d.size());
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Edge-aware smoothness of the mean-normalized disparity d* = d / mean(d):
/// mean over pixels of |dx d*| exp(-|dx I|) + |dy d*| exp(-|dy I|), image
/// gradients averaged over channels, forward differences.
inline double smoothness_loss(const DisparityMap& disparity, const ImageBuffer& target) {
  if (!disparity.values.same_size(target.width(), target.height()))
    throw ArgumentError("smoothness_loss: disparity/image size mismatch");
  const double m = detail::mean_value(disparity.values);
  if (!(m > 0.0)) throw ArgumentError("smoothness_loss: mean disparity must be > 0");
  const auto w = detail::edge_weights(target);
  return detail::weighted_tv(disparity.values, w) / (static_cast<double>(disparity.pixel_count()) * m);
}

/// A source view for the rectified warp. direction = +1 for a source to the
/// right of the target (sampled at x - d), -1 for one to the left.
struct SourceView {
  std::reference_wrapper<const ImageBuffer> image;
  int direction = +1;
};

/// Inclusion mask (validity AND mu) and per-pixel source choice, frozen so a
/// finite-difference probe sees the same piecewise branch as the gradient.
struct LossMasks {
  std::vector<std::uint8_t> included;
  std::vector<int> source;
};

/// Everything computed by one loss evaluation; reused by the gradient.
struct LossEvaluation {
  LossBreakdown breakdown;
  std::vector<WarpResult> reconstructions;
  LossMasks masks;
  std::size_t included_count = 0;
  double disparity_mean = 0.0;
  double weighted_tv = 0.0;
};

/// L = mu * L_p + lambda * L_s for a target view, its disparity field and
/// one or more rectified source views.
class StereoObjective {
 public:
  StereoObjective(const ImageBuffer& target, std::vector<SourceView> sources, const StereoRig& rig,
                  const Intrinsics& K, const LossConfig& cfg)
      : target_(target), sources_(std::move(sources)), cfg_(cfg) {
    cfg_.validate();
    rig.validate();
    K.validate();
    if (sources_.empty()) throw ArgumentError("StereoObjective: no source views");
    if (!K.matches(target.width(), target.height()) || !rig.left.matches(target.width(), target.height()))
      throw ArgumentError("StereoObjective: intrinsics resolution does not match the target image");
    for (const auto& s : sources_) {
      detail::check_same_shape(target, s.image.get(), "StereoObjective");
      if (s.direction != 1 && s.direction != -1) throw ArgumentError("StereoObjective: direction must be +1 or -1");
    }
    detail::check_window(target, cfg_.ssim_window);
    edges_ = detail::edge_weights(target);
    if (cfg_.automask_enabled) {
      raw_min_.assign(target.pixel_count(), std::numeric_limits<double>::infinity());
      for (const auto& s : sources_) {
        const ImageBuffer re = reconstruction_error(target, s.image.get(), cfg_);
        for (std::size_t i = 0; i < raw_min_.size(); ++i) raw_min_[i] = std::min(raw_min_[i], re.data()[i]);
      }
    }
  }

  const LossConfig& config() const noexcept { return cfg_; }
  const ImageBuffer& target() const noexcept { return target_; }

  /// Offset added to the unwarped-source error before auto-masking.
  void set_identity_offset(ImageBuffer offset) {
    if (!offset.same_shape(ImageBuffer(target_.width(), target_.height(), 1)))
      throw ArgumentError("identity offset must be a single-channel map of the target size");
    identity_offset_ = std::move(offset);
  }

  LossEvaluation evaluate(const DisparityMap& d, const LossMasks* frozen = nullptr) const {
    if (!d.values.same_size(target_.width(), target_.height()))
      throw ArgumentError("StereoObjective: disparity resolution mismatch");
    const std::size_t n = target_.pixel_count();
    LossEvaluation ev;
    ev.reconstructions.reserve(sources_.size());
    for (const auto& s : sources_) ev.reconstructions.push_back(warp_rectified(s.image.get(), d, s.direction));

    const auto rep = reprojection_loss(target_, ev.reconstructions, cfg_);
    if (frozen) {
      if (frozen->included.size() != n || frozen->source.size() != n)
        throw ArgumentError("StereoObjective: frozen mask size mismatch");
      ev.masks = *frozen;
    } else {
      ev.masks.included.assign(n, 0);
      ev.masks.source = rep.source;
      for (std::size_t i = 0; i < n; ++i) {
        bool mu = true;
        if (cfg_.automask_enabled) {
          const double offset = identity_offset_ ? identity_offset_->data()[i] : 0.0;
          mu = rep.loss.data()[i] < raw_min_[i] + offset;
        }
        ev.masks.included[i] = rep.valid[i] && mu ? 1 : 0;
      }
    }

    // With frozen masks the chosen source's RE is used even if another source
    // became smaller; recompute per-source RE only when needed.
    std::vector<ImageBuffer> per_source;
    if (frozen && sources_.size() > 1)
      for (const auto& rec : ev.reconstructions) per_source.push_back(reconstruction_error(target_, rec.image, cfg_));

    auto& b = ev.breakdown;
    b.per_pixel_photometric = ImageBuffer(target_.width(), target_.height(), 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!ev.masks.included[i]) continue;
      const int s = ev.masks.source[i];
      if (s < 0) throw ArgumentError("StereoObjective: included pixel without a source");
      const double v = per_source.empty() ? rep.loss.data()[i] : per_source[s].data()[i];
      b.per_pixel_photometric.data()[i] = v;
      sum += v;
      ++ev.included_count;
    }
    b.photometric = ev.included_count ? sum / static_cast<double>(ev.included_count) : 0.0;
    b.masked_fraction = 1.0 - static_cast<double>(ev.included_count) / static_cast<double>(n);

    ev.disparity_mean = detail::mean_value(d.values);
    if (ev.disparity_mean > 0.0) {
      ev.weighted_tv = detail::weighted_tv(d.values, edges_);
      b.smoothness = ev.weighted_tv / (static_cast<double>(n) * ev.disparity_mean);
    } else {
      // identically zero field: constant, so no smoothness penalty
      b.smoothness = 0.0;
    }
    b.total = b.photometric + cfg_.lambda_smooth * b.smoothness;
    return ev;
  }

  /// dL/dd per pixel, with the masks of `ev` held constant.
  ImageBuffer gradient(const DisparityMap& d, const LossEvaluation& ev) const {
    const int w = target_.width(), h = target_.height(), ch = target_.channels();
    const std::size_t n = target_.pixel_count();
    ImageBuffer grad(w, h, 1);
    const double alpha = cfg_.ssim_weight;

    if (ev.included_count > 0) {
      const double inv_count = 1.0 / static_cast<double>(ev.included_count);
      for (std::size_t s = 0; s < sources_.size(); ++s) {
        const ImageBuffer& recon = ev.reconstructions[s].image;
        // upstream weight of each pixel's RE for this source
        std::vector<double> weight(n, 0.0);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i)
          if (ev.masks.included[i] && ev.masks.source[i] == static_cast<int>(s)) {
            weight[i] = inv_count;
            any = true;
          }
        if (!any) continue;

        ImageBuffer g_recon(w, h, ch);  // dL/d recon
        if (alpha > 0.0) {
          const detail::SsimStats st(target_, recon, cfg_.ssim_window);
          ImageBuffer g_mu(w, h, ch), g_bb(w, h, ch), g_ab(w, h, ch);
          for (std::size_t p = 0; p < n; ++p) {
            if (weight[p] == 0.0) continue;
            const double g_s = -0.5 * alpha / ch * weight[p];
            for (int c = 0; c < ch; ++c) {
              const std::size_t i = p * ch + c;
              const auto t = detail::ssim_terms(st, i, cfg_.ssim_c1, cfg_.ssim_c2);
              const double ma = st.mu_a.data()[i], mb = st.mu_b.data()[i];
              const double num = t.a1 * t.a2, den = t.b1 * t.b2;
              const double d_mu = (2.0 * ma * (t.a2 - t.a1) * den - num * 2.0 * mb * (t.b2 - t.b1)) / (den * den);
              const double d_bb = -num * t.b1 / (den * den);
              const double d_ab = 2.0 * t.a1 / den;
              g_mu.data()[i] = g_s * d_mu;
              g_bb.data()[i] = g_s * d_bb;
              g_ab.data()[i] = g_s * d_ab;
            }
          }
          const ImageBuffer a_mu = detail::box_filter_reflect_adjoint(g_mu, cfg_.ssim_window);
          const ImageBuffer a_bb = detail::box_filter_reflect_adjoint(g_bb, cfg_.ssim_window);
          const ImageBuffer a_ab = detail::box_filter_reflect_adjoint(g_ab, cfg_.ssim_window);
          auto gr = g_recon.data();
          for (std::size_t i = 0; i < gr.size(); ++i)
            gr[i] = a_mu.data()[i] + 2.0 * recon.data()[i] * a_bb.data()[i] + target_.data()[i] * a_ab.data()[i];
        }
        if (alpha < 1.0) {
          for (std::size_t p = 0; p < n; ++p) {
            if (weight[p] == 0.0) continue;
            for (int c = 0; c < ch; ++c) {
              const std::size_t i = p * ch + c;
              g_recon.data()[i] +=
                  (1.0 - alpha) / ch * weight[p] * detail::sign(recon.data()[i] - target_.data()[i]);
            }
          }
        }
        // recon(x, y) = source(x - dir * d(x, y), y)
        const ImageBuffer& src = sources_[s].image.get();
        const int dir = sources_[s].direction;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double sx = x - dir * d(x, y);
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) {
              const double g = g_recon(x, y, c);
              if (g != 0.0) acc += g * bilinear_sample_dx(src, sx, y, c);
            }
            grad(x, y) += -dir * acc;
          }
      }
    }

    if (cfg_.lambda_smooth > 0.0 && ev.disparity_mean > 0.0) {
      const double nm = static_cast<double>(n) * ev.disparity_mean;
      const double shift = ev.weighted_tv / (nm * ev.disparity_mean * static_cast<double>(n));
      const ImageBuffer& dv = d.values;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double g = 0.0;
          if (x + 1 < w) g -= edges_.wx(x, y) * detail::sign(dv(x + 1, y) - dv(x, y));
          if (x > 0) g += edges_.wx(x - 1, y) * detail::sign(dv(x, y) - dv(x - 1, y));
          if (y + 1 < h) g -= edges_.wy(x, y) * detail::sign(dv(x, y + 1) - dv(x, y));
          if (y > 0) g += edges_.wy(x, y - 1) * detail::sign(dv(x, y) - dv(x, y - 1));
          grad(x, y) += cfg_.lambda_smooth * (g / nm - shift);
        }
    }
    return grad;
  }

 private:
  ImageBuffer target_;
  std::vector<SourceView> sources_;
  LossConfig cfg_;
  detail::EdgeWeights edges_;
  std::vector<double> raw_min_;
  std::optional<ImageBuffer> identity_offset_;
};

/// Full loss breakdown for a left target and right source of a rectified rig.
inline LossBreakdown total_loss(const ImageBuffer& target, const DisparityMap& disparity,
                                std::span<const SourceView> sources, const StereoRig& rig, const Intrinsics& K,
                                const LossConfig& cfg = {}) {
  StereoObjective obj(target, {sources.begin(), sources.end()}, rig, K, cfg);
  return obj.evaluate(disparity).breakdown;
}

inline LossBreakdown total_loss(const ImageBuffer& left, const DisparityMap& disparity, const ImageBuffer& right,
                                const StereoRig& rig, const LossConfig& cfg = {}) {
  const SourceView src{std::cref(right), +1};
  return total_loss(left, disparity, std::span<const SourceView>(&src, 1), rig, rig.left, cfg);
}

/// Analytic dL/dd; auto-mask and validity are treated as constants.
inline ImageBuffer loss_gradient(const ImageBuffer& target, const DisparityMap& disparity,
                                 std::span<const SourceView> sources, const StereoRig& rig, const Intrinsics& K,
                                 const LossConfig& cfg = {}) {
  StereoObjective obj(target, {sources.begin(), sources.end()}, rig, K, cfg);
  return obj.gradient(disparity, obj.evaluate(disparity));
}

inline ImageBuffer loss_gradient(const ImageBuffer& left, const DisparityMap& disparity, const ImageBuffer& right,
                                 const StereoRig& rig, const LossConfig& cfg = {}) {
  const SourceView src{std::cref(right), +1};
  return loss_gradient(left, disparity, std::span<const SourceView>(&src, 1), rig, rig.left, cfg);
}

}  // namespace pld
