#pragma once

#include <Eigen/Core>

#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pld/pld.hpp"

namespace pld::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Bad flag values detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Resolution {
  int width = 0;
  int height = 0;
};

inline Resolution parse_resolution(const std::string& s, const char* flag) {
  static const std::regex re(R"((\d{1,6})[xX](\d{1,6}))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw UsageError(std::string(flag) + ": expected WxH, got '" + s + "'");
  Resolution r{std::stoi(m[1]), std::stoi(m[2])};
  if (r.width < 1 || r.height < 1) throw UsageError(std::string(flag) + ": resolution must be positive");
  return r;
}

inline int round_to_32(int v) { return std::max(32, (v + 16) / 32 * 32); }

namespace detail {

struct Output {
  std::ostream& out;
  std::string json_path;

  /// Print `fields` as key=value, config lines prefixed "config.", and write
  /// the JSON record if requested.
  void report(const io::Fields& fields, const io::Fields& config, io::Json extra = nullptr) const {
    out << io::to_key_value(fields);
    for (const auto& [k, v] : config) out << "config." << k << "=" << io::format_value(v) << "\n";
    if (!json_path.empty()) {
      io::Json j = io::to_json(fields);
      if (!extra.is_null())
        for (auto& [k, v] : extra.items()) j[k] = v;
      j["config"] = io::to_json(config);
      io::write_file(json_path, j.dump(2) + "\n");
    }
  }
};

inline io::CalibrationSet load_calibration(const std::string& path) {
  try {
    return io::parse_calibration(io::read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
  }
}

inline DepthMap as_depth(const DisparityMap& d) { return DepthMap(d.values, d.valid); }

inline void write_disparity(const std::string& path, const DisparityMap& d) {
  const std::string ext = io::lower_extension(path);
  if (ext == ".pfm") io::write_file(path, io::encode_pfm(d));
  else if (ext == ".png") io::write_file(path, io::write_depth_png16(as_depth(d)));
  else throw UsageError(path + ": disparity output must end in .pfm or .png");
}

}  // namespace detail

struct EstimateArgs {
  std::string left, right, weights, calib, out_depth, model_res;
  bool post_process = false;
  double min_depth = 0.1, max_depth = 100.0;
};

struct OptimizeArgs {
  std::string left, right, calib, out_disparity, trace;
  OptimizerConfig opt;
};

struct BackprojectArgs {
  std::string depth, calib, out_cloud, format = "ply", image;
  double max_depth = kDefaultCloudMaxDepth;
};

struct EvalArgs {
  std::string pred, gt, scaling = "fixed:1", crop, out;
  double min_depth = 1e-3, max_depth = 80.0;
};

struct BenchArgs {
  std::string model_res = "640x192";
  std::vector<std::string> image_res{"640x192"};
  int iters = 100, warmup = 5, threads = 1;
  bool mono = false;
};

struct ArchArgs {
  bool stereo = false, mono = false, decoder = false;
  std::string input_res = "640x192";
};

struct MakeWeightsArgs {
  std::string out, input_res = "640x192";
  bool mono = false, zero = false;
  std::uint64_t seed = 1;
};

inline int run_estimate(const EstimateArgs& a, const detail::Output& o) {
  const ImageBuffer left = io::read_image(a.left);
  const ImageBuffer right = io::read_image(a.right);
  if (!left.same_shape(right)) throw ArgumentError("estimate: left and right images differ in size");
  const int w = left.width(), h = left.height();
  Resolution model{round_to_32(w), round_to_32(h)};
  if (!a.model_res.empty()) model = parse_resolution(a.model_res, "--model-res");
  if (model.width % 32 || model.height % 32) throw UsageError("--model-res: both dimensions must be multiples of 32");
  const StereoRig rig = detail::load_calibration(a.calib).rig(w, h);
  const ArchSpec spec = build_depth_net(true, model.height, model.width);
  const WeightStore ws = io::read_weights(a.weights);
  ws.validate_for(spec);

  const bool fast = model.width == w && model.height == h;
  auto run = [&](const ImageBuffer& l, const ImageBuffer& r) {
    ImageBuffer in = stack_channels(l, r);
    if (!fast) in = resize_bilinear(in, model.width, model.height);
    return forward<float>(spec, ws, in).disparity;
  };
  ImageF s = run(left, right);
  if (a.post_process) s = post_process_fuse(s, run(hflip(left), hflip(right)));
  if (!fast) s = resize_bilinear(s, w, h);
  const DepthMap depth = disparity_to_depth(sigmoid_to_disparity(s, rig, a.min_depth, a.max_depth), rig);
  io::write_depth(a.out_depth, depth);
  o.report({{"width", w}, {"height", h}, {"valid_pixels", depth.valid_count()}, {"fast_path", fast},
            {"out_depth", a.out_depth}},
           {{"model_res", io::resolution(model.width, model.height)},
            {"post_process", a.post_process},
            {"min_depth", a.min_depth},
            {"max_depth", a.max_depth},
            {"baseline_m", rig.baseline_m},
            {"fx", rig.left.fx}});
  return kExitOk;
}

inline int run_optimize(const OptimizeArgs& a, const detail::Output& o) {
  const ImageBuffer left = io::read_image(a.left);
  const ImageBuffer right = io::read_image(a.right);
  if (!left.same_shape(right)) throw ArgumentError("optimize: left and right images differ in size");
  const StereoRig rig = detail::load_calibration(a.calib).rig(left.width(), left.height());
  const OptimizationResult r = optimize_disparity(left, right, rig, a.opt);
  detail::write_disparity(a.out_disparity, r.disparity);
  if (!a.trace.empty()) io::write_file(a.trace, io::trace_csv(r.trace));
  const TraceEntry& last = r.trace.entries.back();
  double mean = 0.0;
  for (double v : r.disparity.values.data()) mean += v;
  mean /= static_cast<double>(r.disparity.pixel_count());
  const auto& c = a.opt;
  o.report({{"total", last.total},
            {"photometric", last.photometric},
            {"smoothness", last.smoothness},
            {"masked_fraction", last.masked_fraction},
            {"mean_disparity", mean},
            {"iterations", r.trace.entries.size()},
            {"converged", r.trace.converged},
            {"out_disparity", a.out_disparity}},
           {{"levels", c.levels},
            {"steps", c.steps_per_level},
            {"step_size", c.step_size},
            {"init_disparity", c.init_disparity},
            {"tol", c.convergence_tol},
            {"seed", c.seed},
            {"lambda", c.loss.lambda_smooth},
            {"alpha", c.loss.ssim_weight},
            {"automask", c.loss.automask_enabled}});
  return kExitOk;
}

inline int run_backproject(const BackprojectArgs& a, const detail::Output& o) {
  if (a.format != "ply" && a.format != "pcd") throw UsageError("--format: expected ply or pcd");
  if (!(a.max_depth > 0.0)) throw UsageError("--max-depth: must be > 0");
  const DepthMap depth = io::read_depth(a.depth);
  const Intrinsics K = detail::load_calibration(a.calib).intrinsics(depth.width(), depth.height());
  std::optional<ImageBuffer> img;
  if (!a.image.empty()) img = io::read_image(a.image);
  const PointCloud cloud = back_project(depth, K, img ? &*img : nullptr, BackProjectOptions{a.max_depth});
  if (a.format == "ply") io::write_ply(cloud, a.out_cloud);
  else io::write_pcd(cloud, a.out_cloud);
  o.report({{"points", cloud.size()}, {"valid_pixels", depth.valid_count()}, {"out_cloud", a.out_cloud}},
           {{"format", a.format}, {"max_depth", a.max_depth}, {"intensity", img.has_value()}});
  return kExitOk;
}

inline int run_eval(const EvalArgs& a, const detail::Output& o) {
  EvalConfig cfg;
  cfg.min_depth = a.min_depth;
  cfg.max_depth = a.max_depth;
  try {
    cfg.scaling = Scaling::parse(a.scaling);
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  if (!a.crop.empty()) {
    static const std::regex re(R"((\d+),(\d+),(\d+),(\d+))");
    std::smatch m;
    if (!std::regex_match(a.crop, m, re)) throw UsageError("--crop: expected x0,y0,x1,y1");
    cfg.crop = CropRect{std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4])};
  }
  const DepthMap pred = io::read_depth(a.pred);
  const DepthMap gt = io::read_depth(a.gt);
  const EvalReport r = compute_metrics(pred, gt, cfg);
  const io::Fields cfg_fields{{"min_depth", cfg.min_depth},
                              {"max_depth", cfg.max_depth},
                              {"scaling", cfg.scaling.describe()},
                              {"crop", a.crop.empty() ? "none" : a.crop}};
  if (!a.out.empty()) io::write_file(a.out, io::to_key_value(io::eval_fields(r)));
  o.report(io::eval_fields(r), cfg_fields);
  return kExitOk;
}

inline int run_bench(const BenchArgs& a, const detail::Output& o) {
  if (a.threads < 1) throw UsageError("--threads: must be >= 1");
  Eigen::setNbThreads(a.threads);
  const Resolution model = parse_resolution(a.model_res, "--model-res");
  std::vector<BenchConfig> configs;
  for (const auto& s : a.image_res) {
    const Resolution img = parse_resolution(s, "--image-res");
    BenchConfig c;
    c.model_width = model.width;
    c.model_height = model.height;
    c.image_width = img.width;
    c.image_height = img.height;
    c.iterations = a.iters;
    c.warmup = a.warmup;
    c.stereo = !a.mono;
    try {
      c.validate();
    } catch (const ArgumentError& e) {
      throw UsageError(e.what());
    }
    configs.push_back(c);
  }
  const BenchReport r = run_benchmark(configs);
  o.out << io::to_key_value(r);
  const io::Fields cfg{{"model_res", a.model_res}, {"iters", a.iters},        {"warmup", a.warmup},
                       {"threads", a.threads},     {"stereo", !a.mono},       {"clock", "steady_clock"}};
  for (const auto& [k, v] : cfg) o.out << "config." << k << "=" << io::format_value(v) << "\n";
  if (!o.json_path.empty()) {
    io::Json j = io::to_json(r);
    j["config"] = io::to_json(cfg);
    io::write_file(o.json_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

/// Per-layer table: top-level layers with their output shape and parameter
/// count, residual stages summarized on "Sequential" rows.
inline std::string arch_table(const ArchSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  const auto params = param_count(spec);
  std::string out;
  char buf[160];
  auto with_commas = [](std::int64_t n) {
    std::string s = std::to_string(n);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
  };
  std::snprintf(buf, sizeof buf, "%-26s %-12s %-22s %14s\n", "Layer", "Type", "Output Shape", "Param #");
  out += buf;
  out += std::string(77, '-') + "\n";
  std::string stage;
  std::int64_t stage_params = 0;
  Shape stage_shape;
  auto flush_stage = [&] {
    if (stage.empty()) return;
    std::snprintf(buf, sizeof buf, "%-26s %-12s %-22s %14s\n", stage.c_str(), "Sequential", to_string(stage_shape).c_str(),
                  with_commas(stage_params).c_str());
    out += buf;
    stage.clear();
    stage_params = 0;
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    std::string this_stage;
    if (l.kind == LayerKind::basic_block) this_stage = l.name.substr(0, l.name.rfind('.'));
    if (this_stage != stage) flush_stage();
    std::snprintf(buf, sizeof buf, "%-26s %-12s %-22s %14s\n", l.name.c_str(), to_string(l.kind),
                  to_string(shapes[i].output).c_str(), with_commas(params.layers[i].params).c_str());
    if (!this_stage.empty()) {
      stage = this_stage;
      stage_params += params.layers[i].params;
      stage_shape = shapes[i].output;
    }
    out += buf;
  }
  flush_stage();
  out += std::string(77, '-') + "\n";
  out += "Total params: " + with_commas(params.total) + "\n";
  return out;
}

inline int run_arch(const ArchArgs& a, const detail::Output& o) {
  if (a.stereo == a.mono) throw UsageError("arch: pass exactly one of --stereo or --mono");
  const Resolution r = parse_resolution(a.input_res, "--input-res");
  const ArchSpec spec = a.decoder ? build_depth_net(a.stereo, r.height, r.width) : build_encoder(a.stereo, r.height, r.width);
  o.out << arch_table(spec);
  const auto census = layer_census(spec);
  const io::Fields fields{{"total_params", param_count(spec).total},
                          {"conv2d", census.conv2d},
                          {"batchnorm", census.batchnorm},
                          {"relu", census.relu},
                          {"maxpool", census.maxpool},
                          {"basic_block", census.basic_block}};
  o.report(fields, {{"variant", a.stereo ? "stereo" : "mono"}, {"input_res", a.input_res}, {"decoder", a.decoder}});
  return kExitOk;
}

inline int run_make_weights(const MakeWeightsArgs& a, const detail::Output& o) {
  const Resolution r = parse_resolution(a.input_res, "--input-res");
  const ArchSpec spec = build_depth_net(!a.mono, r.height, r.width);
  const WeightStore ws = make_weights(spec, a.seed, a.zero);
  io::write_weights(a.out, ws);
  o.report({{"tensors", ws.size()}, {"params", param_count(spec).total}, {"out", a.out}},
           {{"variant", a.mono ? "mono" : "stereo"}, {"seed", a.seed}, {"zero", a.zero}});
  return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stereo depth estimation, disparity optimization and pseudo-LiDAR tools", "pld"};
  app.set_config("--config", "", "Read flag defaults from a TOML/INI file (command-line flags win)");
  app.require_subcommand(1);
  app.fallthrough();
  std::string json_out;
  app.add_option("--json-out", json_out, "Also write the report as JSON to this path");

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Network inference to a depth map");
  c_est->add_option("--left", est.left, "Left image")->required();
  c_est->add_option("--right", est.right, "Right image")->required();
  c_est->add_option("--weights", est.weights, "PLKW weight file")->required();
  c_est->add_option("--calib", est.calib, "Calibration file")->required();
  c_est->add_option("--out-depth", est.out_depth, "Output depth (.png with .pfm sidecar, or .pfm)")->required();
  c_est->add_option("--model-res", est.model_res, "Network input WxH (multiples of 32)");
  c_est->add_flag("--pp", est.post_process, "Flip-fusion post-processing");
  c_est->add_option("--min-depth", est.min_depth, "Depth at sigmoid 1")->capture_default_str();
  c_est->add_option("--max-depth", est.max_depth, "Depth at sigmoid 0")->capture_default_str();

  OptimizeArgs opt;
  auto* c_opt = app.add_subcommand("optimize", "Direct disparity optimization on a stereo pair");
  c_opt->add_option("--left", opt.left, "Left image")->required();
  c_opt->add_option("--right", opt.right, "Right image")->required();
  c_opt->add_option("--calib", opt.calib, "Calibration file")->required();
  c_opt->add_option("--out-disparity", opt.out_disparity, "Output disparity (.pfm or .png)")->required();
  c_opt->add_option("--trace", opt.trace, "Per-iteration loss trace (CSV)");
  c_opt->add_option("--levels", opt.opt.levels, "Pyramid levels")->capture_default_str();
  c_opt->add_option("--steps", opt.opt.steps_per_level, "Max steps per level")->capture_default_str();
  c_opt->add_option("--step-size", opt.opt.step_size, "Initial step size")->capture_default_str();
  c_opt->add_option("--init", opt.opt.init_disparity, "Initial disparity (px, coarsest level)")->capture_default_str();
  c_opt->add_option("--tol", opt.opt.convergence_tol, "Relative decrease that ends a level")->capture_default_str();
  c_opt->add_option("--seed", opt.opt.seed, "Seed for the mask tie-break noise")->capture_default_str();
  c_opt->add_option("--lambda", opt.opt.loss.lambda_smooth, "Smoothness weight")->capture_default_str();
  c_opt->add_option("--alpha", opt.opt.loss.ssim_weight, "SSIM weight")->capture_default_str();
  bool no_automask = false;
  c_opt->add_flag("--no-automask", no_automask, "Disable auto-masking");

  BackprojectArgs bp;
  auto* c_bp = app.add_subcommand("backproject", "Depth map to point cloud");
  c_bp->add_option("--depth", bp.depth, "Depth map (.png or .pfm)")->required();
  c_bp->add_option("--calib", bp.calib, "Calibration file")->required();
  c_bp->add_option("--out-cloud", bp.out_cloud, "Output cloud")->required();
  c_bp->add_option("--format", bp.format, "ply or pcd")->capture_default_str();
  c_bp->add_option("--max-depth", bp.max_depth, "Drop points beyond this depth (m)")->capture_default_str();
  c_bp->add_option("--image", bp.image, "Attach grayscale intensity from this image");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Depth metrics against ground truth");
  c_ev->add_option("--pred", ev.pred, "Predicted depth (.png or .pfm)")->required();
  c_ev->add_option("--gt", ev.gt, "Ground-truth depth (.png or .pfm)")->required();
  c_ev->add_option("--scaling", ev.scaling, "none, median or fixed:<c>")->capture_default_str();
  c_ev->add_option("--min-depth", ev.min_depth, "Minimum evaluated depth")->capture_default_str();
  c_ev->add_option("--max-depth", ev.max_depth, "Maximum evaluated depth")->capture_default_str();
  c_ev->add_option("--crop", ev.crop, "Evaluation window x0,y0,x1,y1 (half-open)");
  c_ev->add_option("--out", ev.out, "Also write the key=value report here");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Inference pipeline throughput");
  c_bench->add_option("--model-res", bench.model_res, "Network input WxH")->capture_default_str();
  c_bench->add_option("--image-res", bench.image_res, "Image WxH (repeatable)")->capture_default_str();
  c_bench->add_option("--iters", bench.iters, "Timed iterations")->capture_default_str();
  c_bench->add_option("--warmup", bench.warmup, "Untimed warmup iterations")->capture_default_str();
  c_bench->add_option("--threads", bench.threads, "Kernel threads")->capture_default_str();
  c_bench->add_flag("--mono", bench.mono, "Use the 3-channel network");

  ArchArgs arch;
  auto* c_arch = app.add_subcommand("arch", "Per-layer shapes and parameter counts");
  c_arch->add_flag("--stereo", arch.stereo, "6-channel input");
  c_arch->add_flag("--mono", arch.mono, "3-channel input");
  c_arch->add_flag("--decoder", arch.decoder, "Include the depth decoder");
  c_arch->add_option("--input-res", arch.input_res, "Input WxH")->capture_default_str();

  MakeWeightsArgs mw;
  auto* c_mw = app.add_subcommand("make-weights", "Write a deterministic random weight file");
  c_mw->add_option("--out", mw.out, "Output PLKW file")->required();
  c_mw->add_option("--seed", mw.seed, "Seed")->capture_default_str();
  c_mw->add_option("--input-res", mw.input_res, "Input WxH")->capture_default_str();
  c_mw->add_flag("--mono", mw.mono, "3-channel network");
  c_mw->add_flag("--zero", mw.zero, "All-zero tensors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  opt.opt.loss.automask_enabled = !no_automask;

  const detail::Output o{out, json_out};
  try {
    if (*c_est) return run_estimate(est, o);
    if (*c_opt) return run_optimize(opt, o);
    if (*c_bp) return run_backproject(bp, o);
    if (*c_ev) return run_eval(ev, o);
    if (*c_bench) return run_bench(bench, o);
    if (*c_arch) return run_arch(arch, o);
    if (*c_mw) return run_make_weights(mw, o);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace pld::cli
