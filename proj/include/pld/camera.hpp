#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pld/image.hpp"
#include "pld/sampling.hpp"

namespace pld {

/// Pinhole intrinsics at a reference resolution.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ArgumentError("Intrinsics: focal lengths must be > 0");
    if (width < 1 || height < 1) throw ArgumentError("Intrinsics: reference resolution must be >= 1");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw ArgumentError("Intrinsics: principal point outside the image");
  }

  /// Intrinsics for the same camera sampled at another resolution
  /// (focal lengths and principal point scale with width/height).
  Intrinsics scaled(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
  }

  bool matches(int w, int h) const noexcept { return w == width && h == height; }
};

/// Rectified stereo pair: both cameras share `left`, separated by
/// `baseline_m` along +x of the left camera.
struct StereoRig {
  Intrinsics left;
  double baseline_m = 1.0;

  void validate() const {
    left.validate();
    if (!(baseline_m > 0.0)) throw ArgumentError("StereoRig: baseline must be > 0");
  }

  StereoRig scaled(int new_width, int new_height) const {
    return {left.scaled(new_width, new_height), baseline_m};
  }
};

/// Rigid motion p' = R p + t. Used as the target-to-source transform: it maps
/// a point in the target camera frame into the source camera frame.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_translation(double tx, double ty, double tz) {
    RigidTransform t;
    t.translation = {tx, ty, tz};
    return t;
  }

  /// Transform from a rectified left (target) camera into the right (source)
  /// camera, which sits `baseline` metres along +x.
  static RigidTransform left_to_right(double baseline) { return from_translation(-baseline, 0.0, 0.0); }

  void validate() const {
    const double orth = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (orth > 1e-9) throw ArgumentError("RigidTransform: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
      throw ArgumentError("RigidTransform: rotation determinant != +1");
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (*this) after `first`: p -> this(first(p)).
  RigidTransform compose(const RigidTransform& first) const {
    RigidTransform out;
    out.rotation = rotation * first.rotation;
    out.translation = rotation * first.translation + translation;
    return out;
  }
};

struct DisparityTag {};
struct DepthTag {};

/// Single-channel map plus a per-pixel validity mask. Tagged so disparity
/// (pixels) and depth (metres) cannot be mixed up.
template <class Tag>
struct ScalarField {
  ImageBuffer values;
  std::vector<std::uint8_t> valid;

  ScalarField() = default;
  ScalarField(int width, int height, double fill = 0.0, bool is_valid = true)
      : values(width, height, 1, fill), valid(values.pixel_count(), is_valid ? 1 : 0) {}
  ScalarField(ImageBuffer v, std::vector<std::uint8_t> mask) : values(std::move(v)), valid(std::move(mask)) {
    if (values.channels() != 1) throw ArgumentError("ScalarField: must be single-channel");
    if (valid.size() != values.pixel_count()) throw ArgumentError("ScalarField: mask size mismatch");
  }
  explicit ScalarField(ImageBuffer v) : values(std::move(v)), valid(values.pixel_count(), 1) {
    if (values.channels() != 1) throw ArgumentError("ScalarField: must be single-channel");
  }

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }
  std::size_t pixel_count() const noexcept { return values.pixel_count(); }
  double& operator()(int x, int y) noexcept { return values(x, y); }
  double operator()(int x, int y) const noexcept { return values(x, y); }
  bool is_valid(int x, int y) const noexcept {
    return valid[static_cast<std::size_t>(y) * values.width() + x] != 0;
  }
  std::size_t valid_count() const noexcept {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

using DisparityMap = ScalarField<DisparityTag>;
using DepthMap = ScalarField<DepthTag>;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  float intensity = 0.0f;
};

/// Points in the left-camera frame, row-major pixel order of their source.
struct PointCloud {
  std::vector<Point3> points;
  bool has_intensity = false;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

/// Disparities below this (pixels) are treated as invalid rather than
/// converted into enormous depths.
inline constexpr double kMinDisparity = 1e-3;
/// Default emission cap for point clouds, metres.
inline constexpr double kDefaultCloudMaxDepth = 80.0;

/// z = b * fx / d. Pixels that are invalid or have d < kMinDisparity come out
/// invalid (value 0).
inline DepthMap disparity_to_depth(const DisparityMap& d, const StereoRig& rig) {
  rig.validate();
  const double bf = rig.baseline_m * rig.left.fx;
  DepthMap z(d.width(), d.height(), 0.0, false);
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      const double v = d(x, y);
      if (d.is_valid(x, y) && v >= kMinDisparity) {
        z(x, y) = bf / v;
        z.valid[static_cast<std::size_t>(y) * d.width() + x] = 1;
      }
    }
  return z;
}

/// d = b * fx / z for valid, positive depths.
inline DisparityMap depth_to_disparity(const DepthMap& z, const StereoRig& rig) {
  rig.validate();
  const double bf = rig.baseline_m * rig.left.fx;
  DisparityMap d(z.width(), z.height(), 0.0, false);
  for (int y = 0; y < z.height(); ++y)
    for (int x = 0; x < z.width(); ++x)
      if (z.is_valid(x, y) && z(x, y) > 0.0) {
        d(x, y) = bf / z(x, y);
        d.valid[static_cast<std::size_t>(y) * z.width() + x] = 1;
      }
  return d;
}

struct BackProjectOptions {
  double max_depth = kDefaultCloudMaxDepth;
};

/// Lift every valid depth pixel to (z(x-cx)/fx, z(y-cy)/fy, z) in row-major
/// order. Depths beyond `max_depth` are dropped. When `intensity` is given its
/// grayscale value at the pixel is attached to the point.
inline PointCloud back_project(const DepthMap& depth, const Intrinsics& K,
                               const ImageBuffer* intensity = nullptr,
                               BackProjectOptions opts = {}) {
  K.validate();
  if (!K.matches(depth.width(), depth.height()))
    throw ArgumentError("back_project: depth resolution does not match intrinsics");
  std::optional<ImageBuffer> gray;
  if (intensity) {
    if (!intensity->same_size(depth.width(), depth.height()))
      throw ArgumentError("back_project: intensity image resolution mismatch");
    gray = to_grayscale(*intensity);
  }
  PointCloud cloud;
  cloud.has_intensity = intensity != nullptr;
  cloud.points.reserve(depth.valid_count());
  const double inv_fx = 1.0 / K.fx, inv_fy = 1.0 / K.fy;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double z = depth(x, y);
      if (!(z > 0.0) || z > opts.max_depth) continue;
      Point3 p;
      p.x = z * (x - K.cx) * inv_fx;
      p.y = z * (y - K.cy) * inv_fy;
      p.z = z;
      if (gray) p.intensity = static_cast<float>((*gray)(x, y));
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

struct Projection {
  double x = 0.0;
  double y = 0.0;
  bool in_front = false;
};

/// Pinhole projection; points with Z <= 0 are flagged, not projected.
inline Projection project(const Eigen::Vector3d& p, const Intrinsics& K) {
  if (!(p.z() > 0.0)) return {0.0, 0.0, false};
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy, true};
}

inline Projection project(const Point3& p, const Intrinsics& K) { return project(Eigen::Vector3d(p.x, p.y, p.z), K); }

/// Warped image plus per-pixel validity.
struct WarpResult {
  ImageBuffer image;
  std::vector<std::uint8_t> valid;
};

/// Inverse warp of `source` into the target view: each target pixel is
/// back-projected with its depth, moved by T (target -> source frame),
/// projected with K and bilinearly sampled. Valid means: depth valid, the
/// transformed point is in front of the camera and it lands inside the frame.
inline WarpResult warp_to_target(const ImageBuffer& source, const DepthMap& target_depth,
                                 const Intrinsics& K, const RigidTransform& T) {
  K.validate();
  const int w = source.width(), h = source.height();
  if (!target_depth.values.same_size(w, h) || !K.matches(w, h))
    throw ArgumentError("warp_to_target: source, depth and intrinsics resolutions differ");
  WarpResult out{ImageBuffer(w, h, source.channels()), std::vector<std::uint8_t>(source.pixel_count(), 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = x, sy = y;
      bool ok = false;
      if (target_depth.is_valid(x, y) && target_depth(x, y) > 0.0) {
        const double z = target_depth(x, y);
        const Eigen::Vector3d p(z * (x - K.cx) / K.fx, z * (y - K.cy) / K.fy, z);
        const auto proj = project(T.apply(p), K);
        if (proj.in_front) {
          sx = proj.x;
          sy = proj.y;
          // projection round-off must not drop border pixels
          ok = in_frame(w, h, sx, sy, 1e-9);
        }
      }
      for (int c = 0; c < source.channels(); ++c) out.image(x, y, c) = bilinear_sample(source, sx, sy, c);
      out.valid[static_cast<std::size_t>(y) * w + x] = ok ? 1 : 0;
    }
  }
  return out;
}

/// Rectified fast path: sample `source` at (x - direction * d(x, y), y).
/// direction = +1 when the source camera sits to the right of the target
/// (left target, right source), -1 for the mirrored arrangement.
inline WarpResult warp_rectified(const ImageBuffer& source, const DisparityMap& disparity, int direction = +1) {
  const int w = source.width(), h = source.height();
  if (!disparity.values.same_size(w, h)) throw ArgumentError("warp_rectified: disparity resolution mismatch");
  WarpResult out{ImageBuffer(w, h, source.channels()), std::vector<std::uint8_t>(source.pixel_count(), 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x - direction * disparity(x, y);
      for (int c = 0; c < source.channels(); ++c) out.image(x, y, c) = bilinear_sample(source, sx, y, c);
      out.valid[static_cast<std::size_t>(y) * w + x] = disparity.is_valid(x, y) && in_frame(w, h, sx, y) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace pld
