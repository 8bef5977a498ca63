#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pld/camera.hpp"
#include "pld/inference.hpp"
#include "pld/network.hpp"
#include "pld/sampling.hpp"
#include "pld/synthetic.hpp"

namespace pld {

/// Pipeline stages in execution order.
inline const std::vector<std::string>& bench_stage_names() {
  static const std::vector<std::string> names{"resize_in", "forward", "resize_out", "disp_to_depth", "backproject"};
  return names;
}

struct BenchConfig {
  int model_width = 640;
  int model_height = 192;
  int image_width = 640;
  int image_height = 192;
  int iterations = 100;
  int warmup = 5;
  bool stereo = true;
  std::uint64_t seed = 7;

  bool fast_path() const noexcept { return model_width == image_width && model_height == image_height; }

  void validate() const {
    if (iterations < 1) throw ArgumentError("bench: iterations must be >= 1");
    if (warmup < 0) throw ArgumentError("bench: warmup must be >= 0");
    if (model_width < 32 || model_height < 32 || model_width % 32 || model_height % 32)
      throw ArgumentError("bench: model resolution must be a positive multiple of 32 in each dimension");
    if (image_width < 2 || image_height < 2) throw ArgumentError("bench: image resolution too small");
  }
};

struct StageTiming {
  std::string name;
  double mean_ms = 0.0;
  bool skipped = false;
};

struct BenchEntry {
  BenchConfig config;
  bool fast_path = false;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double fps = 0.0;  // 1000 / mean_ms
  std::vector<double> samples_ms;
  std::vector<StageTiming> stages;
};

struct BenchReport {
  std::vector<BenchEntry> entries;
};

namespace detail {

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Everything one configuration needs, built once before timing.
class BenchPipeline {
 public:
  explicit BenchPipeline(const BenchConfig& cfg)
      : cfg_(cfg),
        spec_(build_depth_net(cfg.stereo, cfg.model_height, cfg.model_width)),
        weights_(make_weights(spec_, cfg.seed)),
        rig_(synthetic::default_rig(cfg.image_width, cfg.image_height)) {
    const int ch = cfg.stereo ? 6 : 3;
    const synthetic::SmoothTexture tex(cfg.seed, ch);
    input_ = tex.render(cfg.image_width, cfg.image_height, [](int, int) { return 0.0; });
    stage_ns_.assign(bench_stage_names().size(), 0.0);
  }

  /// One full pass; returns wall-clock milliseconds and accumulates per-stage time.
  double run_once() {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto mark = clock::now();
    auto lap = [&](std::size_t stage) {
      const auto now = clock::now();
      stage_ns_[stage] += std::chrono::duration<double, std::nano>(now - mark).count();
      mark = now;
    };
    const bool fast = cfg_.fast_path();

    const ImageF net_in =
        fast ? input_.cast<float>() : resize_bilinear(input_, cfg_.model_width, cfg_.model_height).cast<float>();
    lap(0);
    const ForwardResult<float> fr = forward<float>(spec_, weights_, net_in);
    lap(1);
    const ImageF s = fast ? fr.disparity : resize_bilinear(fr.disparity, cfg_.image_width, cfg_.image_height);
    lap(2);
    const DepthMap depth = disparity_to_depth(sigmoid_to_disparity(s, rig_), rig_);
    lap(3);
    const PointCloud cloud = back_project(depth, rig_.left);
    lap(4);
    sink_ += cloud.size();
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }

  void reset_stage_times() { std::fill(stage_ns_.begin(), stage_ns_.end(), 0.0); }

  BenchEntry summarize(std::vector<double> samples) const {
    BenchEntry e;
    e.config = cfg_;
    e.fast_path = cfg_.fast_path();
    const double n = static_cast<double>(samples.size());
    e.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    e.p50_ms = percentile(samples, 0.50);
    e.p95_ms = percentile(samples, 0.95);
    e.fps = 1000.0 / e.mean_ms;
    for (std::size_t i = 0; i < stage_ns_.size(); ++i) {
      const std::string& name = bench_stage_names()[i];
      const bool skipped = e.fast_path && (name == "resize_in" || name == "resize_out");
      e.stages.push_back({name, skipped ? 0.0 : stage_ns_[i] / n * 1e-6, skipped});
    }
    e.samples_ms = std::move(samples);
    return e;
  }

  std::size_t sink() const noexcept { return sink_; }

 private:
  BenchConfig cfg_;
  ArchSpec spec_;
  WeightStore weights_;
  StereoRig rig_;
  ImageBuffer input_;
  std::vector<double> stage_ns_;
  std::size_t sink_ = 0;
};

}  // namespace detail

/// Time several configurations. Iterations are interleaved round-robin so
/// slow drift in machine load hits every configuration alike. Warmup and
/// iteration counts are taken from the first configuration.
inline BenchReport run_benchmark(const std::vector<BenchConfig>& configs) {
  if (configs.empty()) throw ArgumentError("bench: no configurations");
  for (const auto& c : configs) c.validate();
  const int iters = configs.front().iterations, warm = configs.front().warmup;
  std::vector<detail::BenchPipeline> pipes;
  pipes.reserve(configs.size());
  for (auto c : configs) {
    c.iterations = iters;
    c.warmup = warm;
    pipes.emplace_back(c);
  }
  for (int w = 0; w < warm; ++w)
    for (auto& p : pipes) p.run_once();
  for (auto& p : pipes) p.reset_stage_times();
  std::vector<std::vector<double>> samples(pipes.size());
  for (int it = 0; it < iters; ++it)
    for (std::size_t k = 0; k < pipes.size(); ++k) {
      // rotate the starting configuration so none is always first
      const std::size_t j = (k + static_cast<std::size_t>(it)) % pipes.size();
      samples[j].push_back(pipes[j].run_once());
    }
  BenchReport r;
  for (std::size_t k = 0; k < pipes.size(); ++k) r.entries.push_back(pipes[k].summarize(std::move(samples[k])));
  return r;
}

inline BenchReport run_benchmark(const BenchConfig& cfg) { return run_benchmark(std::vector<BenchConfig>{cfg}); }

}  // namespace pld
