#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pld/bench.hpp"
#include "pld/evaluation.hpp"
#include "pld/optimizer.hpp"

namespace pld::io {

using Json = nlohmann::ordered_json;

/// Ordered key/value pairs; the same list drives the text and JSON forms.
using Fields = std::vector<std::pair<std::string, Json>>;

inline std::string format_value(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  return v.dump();
}

inline std::string to_key_value(const Fields& f) {
  std::string out;
  for (const auto& [k, v] : f) out += k + "=" + format_value(v) + "\n";
  return out;
}

inline Json to_json(const Fields& f) {
  Json j = Json::object();
  for (const auto& [k, v] : f) j[k] = v;
  return j;
}

inline Fields eval_fields(const EvalReport& r) {
  return {{"abs_rel", r.abs_rel}, {"sq_rel", r.sq_rel},   {"rmse", r.rmse},     {"rmse_log", r.rmse_log},
          {"delta1", r.delta1},   {"delta2", r.delta2},   {"delta3", r.delta3}, {"n_valid", r.n_valid},
          {"scaling", r.scaling}};
}

inline std::string resolution(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

inline Fields bench_entry_fields(const BenchEntry& e) {
  Fields f{{"model_res", resolution(e.config.model_width, e.config.model_height)},
           {"image_res", resolution(e.config.image_width, e.config.image_height)},
           {"fast_path", e.fast_path},
           {"iterations", e.config.iterations},
           {"warmup", e.config.warmup},
           {"samples", e.samples_ms.size()},
           {"mean_ms", e.mean_ms},
           {"p50_ms", e.p50_ms},
           {"p95_ms", e.p95_ms},
           {"fps", e.fps}};
  for (const auto& s : e.stages) {
    if (s.skipped) f.emplace_back("stage." + s.name, "skipped");
    else f.emplace_back("stage." + s.name + "_ms", s.mean_ms);
  }
  return f;
}

inline std::string to_key_value(const BenchReport& r) {
  std::string out;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    for (const auto& [k, v] : bench_entry_fields(r.entries[i]))
      out += "entry" + std::to_string(i) + "." + k + "=" + format_value(v) + "\n";
  }
  return out;
}

inline Json to_json(const BenchReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json j = to_json(bench_entry_fields(e));
    Json stages = Json::array();
    for (const auto& s : e.stages) stages.push_back({{"name", s.name}, {"mean_ms", s.mean_ms}, {"skipped", s.skipped}});
    j["stages"] = std::move(stages);
    j["samples_ms"] = e.samples_ms;
    entries.push_back(std::move(j));
  }
  return Json{{"entries", std::move(entries)}};
}

inline std::string trace_csv(const OptimizationTrace& t) {
  std::string out = "level,step,width,height,step_size,total,photometric,smoothness,masked_fraction\n";
  char buf[256];
  for (const auto& e : t.entries) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.10g,%.17g,%.17g,%.17g,%.10g\n", e.level, e.step, e.width, e.height,
                  e.step_size, e.total, e.photometric, e.smoothness, e.masked_fraction);
    out += buf;
  }
  return out;
}

}  // namespace pld::io
