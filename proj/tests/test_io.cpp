#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "test_support.hpp"

namespace pld {
namespace {

using testing::Rng;

// ---- calibration ----

const char* kKittiLike =
    "P0: 7.215377e+02 0 6.095593e+02 0 0 7.215377e+02 1.728540e+02 0 0 0 1 0\n"
    "P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 "
    "2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03\n"
    "P3: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 "
    "2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03\n";

TEST(Calibration, RepresentativeBaseline) {
  const auto cal = io::parse_calibration(kKittiLike);
  EXPECT_NEAR(cal.baseline(), (44.85728 + 339.5242) / 721.5377, 1e-12);
  EXPECT_NEAR(cal.baseline(), 0.5327, 5e-5);
  const auto k = cal.intrinsics(1242, 375);
  EXPECT_EQ(k.fx, 721.5377);
  EXPECT_EQ(k.cx, 609.5593);
  EXPECT_EQ(k.cy, 172.854);
}

TEST(Calibration, ZeroLeftTranslationGivesExactBaseline) {
  const std::string text =
      "P2: 500 0 320 0 0 500 96 0 0 0 1 0\n"
      "P3: 500 0 320 -270 0 500 96 0 0 0 1 0\n";
  EXPECT_EQ(io::parse_calibration(text).baseline(), 0.54);
}

TEST(Calibration, ElevenNumbersNamesTheLine) {
  const std::string text =
      "P2: 500 0 320 0 0 500 96 0 0 0 1 0\n"
      "\n"
      "P3: 500 0 320 -270 0 500 96 0 0 0 1\n";
  try {
    io::parse_calibration(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("P3"), std::string::npos);
  }
}

TEST(Calibration, MissingAndNonFinite) {
  EXPECT_THROW(io::parse_calibration("P2: 500 0 320 0 0 500 96 0 0 0 1 0\n"), ParseError);
  EXPECT_THROW(io::parse_calibration("P2: 500 0 320 0 0 500 96 0 0 0 1 nan\nP3: 1 0 0 -1 0 1 0 0 0 0 1 0\n"),
               ParseError);
  EXPECT_THROW(io::parse_calibration("P2: 500 0 320 0 0 500 96 0 0 0 1 0\nP3: 500 0 320 0 0 500 96 0 0 0 1 x\n"),
               ParseError);
}

TEST(Calibration, SynthesizeRoundTrip) {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const auto k = testing::random_intrinsics(rng, testing::uniform_int(rng, 32, 2000), testing::uniform_int(rng, 32, 800));
    const double b = testing::uniform(rng, 0.05, 2.0);
    const auto cal = io::parse_calibration(io::synthesize_calibration(k, b));
    const auto back = cal.intrinsics();
    EXPECT_NEAR(back.fx, k.fx, 1e-9);
    EXPECT_NEAR(back.fy, k.fy, 1e-9);
    EXPECT_NEAR(back.cx, k.cx, 1e-9);
    EXPECT_NEAR(back.cy, k.cy, 1e-9);
    EXPECT_EQ(back.width, k.width);
    EXPECT_NEAR(cal.baseline(), b, 1e-9);
  }
}

TEST(Calibration, RescalesToOtherResolution) {
  const Intrinsics k{700, 700, 600, 180, 1200, 360};
  const auto cal = io::parse_calibration(io::synthesize_calibration(k, 0.5));
  const auto half = cal.intrinsics(600, 180);
  EXPECT_DOUBLE_EQ(half.fx, 350);
  EXPECT_DOUBLE_EQ(half.cy, 90);
}

// ---- split ----

TEST(Split, Examples) {
  const auto e = io::parse_split("2011_09_26/x_sync 42 l\n");
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].scene, "2011_09_26/x_sync");
  EXPECT_EQ(e[0].frame, 42);
  EXPECT_EQ(e[0].side, io::Side::left);
  EXPECT_EQ(e[0].partner().side, io::Side::right);
  EXPECT_EQ(e[0].partner().frame, 42);
  EXPECT_TRUE(io::parse_split("").empty());
  EXPECT_THROW(io::parse_split("a 1 x\n"), ParseError);
}

TEST(Split, OrderAndErrors) {
  const auto e = io::parse_split("a 1 r\n\n  b 7 l  \n");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[1].scene, "b");
  EXPECT_EQ(e[0].partner(), (io::SplitEntry{"a", 1, io::Side::left}));
  try {
    io::parse_split("a 1 l\nb two l\n");
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 2u);
  }
  EXPECT_THROW(io::parse_split("a 1\n"), ParseError);
  EXPECT_THROW(io::parse_split("a 1 l extra\n"), ParseError);
}

// ---- images and depth ----

TEST(DepthPng, RawValues) {
  DepthMap d(3, 1, 0.0, false);
  d(0, 0) = 100.0;
  d.valid[0] = 1;
  d(1, 0) = 1.0;
  d.valid[1] = 1;
  const auto back = io::read_depth_png16(io::write_depth_png16(d));
  EXPECT_EQ(back(0, 0), 25600 / 256.0);
  EXPECT_EQ(back(1, 0), 256 / 256.0);
  EXPECT_TRUE(back.is_valid(0, 0));
  EXPECT_FALSE(back.is_valid(2, 0));
}

TEST(DepthPng, RoundTripWithinQuantization) {
  Rng rng(62);
  const auto d = testing::random_sparse_depth(rng, 17, 9, 0.6, 0.1, 200.0);
  const auto back = io::read_depth_png16(io::write_depth_png16(d));
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) {
      EXPECT_EQ(back.is_valid(x, y), d.is_valid(x, y));
      if (d.is_valid(x, y)) EXPECT_NEAR(back(x, y), d(x, y), 0.5 / 256.0 + 1e-12);
    }
}

TEST(DepthPng, EightBitRejected) {
  const ImageBuffer gray(4, 4, 1, 0.5);
  EXPECT_THROW(io::read_depth_png16(io::encode_png(gray)), FormatError);
  const ImageBuffer rgb(4, 4, 3, 0.5);
  EXPECT_THROW(io::read_depth_png16(io::encode_png(rgb)), FormatError);
}

TEST(ImagePng, RoundTrip8Bit) {
  Rng rng(63);
  ImageBuffer img(7, 5, 3);
  for (auto& v : img.data()) v = testing::uniform_int(rng, 0, 255) / 255.0;
  EXPECT_EQ(io::decode_png(io::encode_png(img)), img);
}

TEST(ImagePnm, DecodeP6AndP5) {
  const std::string p6 = "P6\n# comment\n2 1\n255\n";
  io::Bytes b(p6.begin(), p6.end());
  for (int v : {255, 0, 51, 0, 102, 255}) b.push_back(static_cast<std::uint8_t>(v));
  const auto img = io::decode_pnm(b);
  ASSERT_EQ(img.width(), 2);
  EXPECT_EQ(img(0, 0, 0), 1.0);
  EXPECT_EQ(img(0, 0, 2), 51 / 255.0);
  EXPECT_EQ(img(1, 0, 2), 1.0);

  const std::string p5 = "P5 1 1 100\n";
  io::Bytes g(p5.begin(), p5.end());
  g.push_back(50);
  const auto gi = io::decode_pnm(g);
  EXPECT_EQ(gi.channels(), 3);
  EXPECT_EQ(gi(0, 0, 1), 0.5);

  io::Bytes trunc(p6.begin(), p6.end());
  trunc.push_back(1);
  EXPECT_THROW(io::decode_pnm(trunc), FormatError);
  const std::string deep = "P6 1 1 65535\n";
  EXPECT_THROW(io::decode_pnm(io::Bytes(deep.begin(), deep.end())), FormatError);
}

TEST(Pfm, RoundTripKeepsInvalid) {
  Rng rng(64);
  const auto d = testing::random_sparse_depth(rng, 11, 6, 0.5, 0.1, 80.0);
  const auto back = io::decode_pfm<DepthTag>(io::encode_pfm(d));
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 11; ++x) {
      ASSERT_EQ(back.is_valid(x, y), d.is_valid(x, y));
      if (d.is_valid(x, y)) EXPECT_EQ(back(x, y), static_cast<float>(d(x, y)));
    }
  const auto bytes = io::encode_pfm(d);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 3), "Pf\n");
  io::Bytes cut(bytes.begin(), bytes.end() - 1);
  EXPECT_THROW(io::decode_pfm<DepthTag>(cut), FormatError);
}

TEST(DepthFiles, PngWritesPfmSidecar) {
  const auto dir = testing::temp_dir("depthfiles");
  DepthMap d(4, 3, 2.5);
  d.valid[5] = 0;
  io::write_depth((dir / "z.png").string(), d);
  EXPECT_TRUE(std::filesystem::exists(dir / "z.pfm"));
  const auto png = io::read_depth((dir / "z.png").string());
  const auto pfm = io::read_depth((dir / "z.pfm").string());
  EXPECT_EQ(png.valid, d.valid);
  EXPECT_EQ(pfm.valid, d.valid);
  EXPECT_EQ(pfm(0, 0), 2.5);
  EXPECT_THROW(io::write_depth((dir / "z.txt").string(), d), ArgumentError);
  EXPECT_THROW(io::read_depth((dir / "missing.png").string()), IoError);
  std::filesystem::remove_all(dir);
}

// ---- point clouds ----

struct ReadCloud {
  std::string header;
  std::vector<std::array<float, 4>> points;
  bool intensity = false;
};

// Independent reader: parse the ASCII header line by line, then unpack floats.
ReadCloud read_cloud(const io::Bytes& bytes, const std::string& end_marker) {
  ReadCloud out;
  std::size_t pos = 0;
  std::size_t n = 0;
  int fields = 0;
  while (true) {
    const auto nl = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
    if (nl == bytes.end()) throw std::runtime_error("no header end");
    const std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos), nl);
    pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    out.header += line + "\n";
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "element") {
      std::string what;
      ls >> what >> n;
    } else if (key == "POINTS") {
      ls >> n;
    } else if (key == "property") {
      ++fields;
    } else if (key == "FIELDS") {
      std::string f;
      while (ls >> f) ++fields;
    }
    if (line.rfind(end_marker, 0) == 0) break;
  }
  out.intensity = fields == 4;
  if (bytes.size() - pos != n * fields * 4) throw std::runtime_error("body size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    std::array<float, 4> p{};
    for (int f = 0; f < fields; ++f) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * k);
      p[f] = std::bit_cast<float>(u);
    }
    out.points.push_back(p);
  }
  return out;
}

TEST(Ply, HeaderAndSinglePoint) {
  PointCloud empty;
  const auto eb = io::encode_ply(empty);
  EXPECT_EQ(std::string(eb.begin(), eb.end()),
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\n"
            "property float z\nend_header\n");
  PointCloud one;
  one.points.push_back({0, 0, 5});
  const auto b = io::encode_ply(one);
  const std::string head =
      "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n";
  ASSERT_EQ(b.size(), head.size() + 12);
  EXPECT_EQ(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(head.size())), head);
  const std::uint8_t body[12] = {0, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0xa0, 0x40};
  EXPECT_EQ(std::memcmp(b.data() + head.size(), body, 12), 0);
}

TEST(Ply, IntensityHeader) {
  PointCloud c;
  c.has_intensity = true;
  c.points.push_back({1, 2, 3, 0.5f});
  const auto r = read_cloud(io::encode_ply(c), "end_header");
  EXPECT_NE(r.header.find("property float intensity\nend_header\n"), std::string::npos);
  ASSERT_TRUE(r.intensity);
  EXPECT_EQ(r.points[0][3], 0.5f);
}

PointCloud random_cloud(Rng& rng, std::size_t n, bool intensity) {
  PointCloud c;
  c.has_intensity = intensity;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({testing::uniform(rng, -50, 50), testing::uniform(rng, -5, 5), testing::uniform(rng, 0.1, 80),
                        static_cast<float>(testing::uniform(rng, 0, 1))});
  return c;
}

TEST(CloudRoundTrip, PlyAndPcdThousandPoints) {
  Rng rng(65);
  for (bool intensity : {false, true}) {
    const auto c = random_cloud(rng, 1000, intensity);
    for (int fmt = 0; fmt < 2; ++fmt) {
      const auto r = fmt == 0 ? read_cloud(io::encode_ply(c), "end_header") : read_cloud(io::encode_pcd(c), "DATA");
      ASSERT_EQ(r.points.size(), 1000u);
      EXPECT_EQ(r.intensity, intensity);
      for (std::size_t i = 0; i < 1000; ++i) {
        EXPECT_EQ(r.points[i][0], static_cast<float>(c.points[i].x));
        EXPECT_EQ(r.points[i][1], static_cast<float>(c.points[i].y));
        EXPECT_EQ(r.points[i][2], static_cast<float>(c.points[i].z));
        if (intensity) EXPECT_EQ(r.points[i][3], c.points[i].intensity);
      }
    }
  }
}

TEST(Pcd, HeaderFields) {
  PointCloud c;
  c.points.push_back({1, 2, 3});
  c.points.push_back({4, 5, 6});
  const auto r = read_cloud(io::encode_pcd(c), "DATA");
  EXPECT_NE(r.header.find("VERSION 0.7\n"), std::string::npos);
  EXPECT_NE(r.header.find("FIELDS x y z\n"), std::string::npos);
  EXPECT_NE(r.header.find("WIDTH 2\n"), std::string::npos);
  EXPECT_NE(r.header.find("POINTS 2\n"), std::string::npos);
  EXPECT_NE(r.header.find("DATA binary\n"), std::string::npos);
  EXPECT_EQ(r.points[1][2], 6.0f);
}

TEST(CloudFiles, WriteToDisk) {
  const auto dir = testing::temp_dir("clouds");
  Rng rng(66);
  const auto c = random_cloud(rng, 10, false);
  io::write_ply(c, (dir / "a.ply").string());
  io::write_pcd(c, (dir / "a.pcd").string());
  EXPECT_EQ(io::read_file((dir / "a.ply").string()), io::encode_ply(c));
  EXPECT_EQ(io::read_file((dir / "a.pcd").string()), io::encode_pcd(c));
  EXPECT_THROW(io::write_ply(c, (dir / "nope" / "a.ply").string()), IoError);
  std::filesystem::remove_all(dir);
}

// ---- weights ----

TEST(Weights, ZeroTensorFile) {
  const io::Bytes b{'P', 'L', 'K', 'W', 1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_TRUE(io::load_weights(b).empty());
  EXPECT_EQ(io::save_weights(WeightStore{}), b);
}

TEST(Weights, FirstConvConsumes18816Floats) {
  WeightStore ws;
  WeightTensor t{{64, 6, 7, 7}, std::vector<float>(18816)};
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i) * 0.25f;
  ws.insert("enc.conv1.weight", t);
  const auto bytes = io::save_weights(ws);
  const std::size_t header = 12 + 2 + 16 + 1 + 4 * 4;
  EXPECT_EQ(bytes.size(), header + 18816 * 4);
  const auto back = io::load_weights(bytes);
  EXPECT_EQ(back.at("enc.conv1.weight").data, t.data);
  EXPECT_EQ(back.at("enc.conv1.weight").element_count(), 18816u);
}

TEST(Weights, FullModelRoundTripIsLossless) {
  const auto spec = build_depth_net(true, 64, 64);
  const auto ws = make_weights(spec, 11);
  const auto back = io::load_weights(io::save_weights(ws));
  ASSERT_EQ(back.size(), ws.size());
  for (const auto& [n, t] : ws.tensors()) {
    EXPECT_EQ(back.at(n).dims, t.dims);
    EXPECT_EQ(std::memcmp(back.at(n).data.data(), t.data.data(), t.data.size() * 4), 0) << n;
  }
  EXPECT_NO_THROW(back.validate_for(spec));
}

TEST(Weights, TruncatedPayloadOffset) {
  WeightStore ws;
  ws.insert("w", WeightTensor{{3}, {1, 2, 3}});
  auto bytes = io::save_weights(ws);
  bytes.pop_back();
  // payload starts after 12 + 2 + 1 + 1 + 4 bytes
  try {
    io::load_weights(bytes);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.offset(), 20u);
  }
}

TEST(Weights, BadMagicVersionDuplicatesTrailing) {
  WeightStore ws;
  ws.insert("a", WeightTensor{{1}, {1}});
  const auto good = io::save_weights(ws);
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(io::load_weights(bad), LoadError);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(io::load_weights(bad), LoadError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(io::load_weights(bad), LoadError);

  // same entry written twice, count bumped to 2
  io::Bytes dup(good.begin(), good.begin() + 12);
  dup[8] = 2;
  dup.insert(dup.end(), good.begin() + 12, good.end());
  dup.insert(dup.end(), good.begin() + 12, good.end());
  try {
    io::load_weights(dup);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.offset(), good.size());
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
}

TEST(Weights, FuzzedTruncationAlwaysErrors) {
  const auto spec = build_encoder(false, 32, 32);
  auto ws = make_weights(spec, 3);
  WeightStore small;
  int kept = 0;
  for (const auto& [n, t] : ws.tensors())
    if (t.data.size() < 5000 && kept++ < 12) small.insert(n, t);
  const auto bytes = io::save_weights(small);
  Rng rng(67);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t len = static_cast<std::size_t>(testing::uniform_int(rng, 0, static_cast<int>(bytes.size()) - 1));
    const io::Bytes cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(io::load_weights(cut), LoadError) << "length " << len;
  }
  for (int trial = 0; trial < 300; ++trial) {
    io::Bytes noisy = bytes;
    for (int k = 0; k < 4; ++k)
      noisy[static_cast<std::size_t>(testing::uniform_int(rng, 0, static_cast<int>(bytes.size()) - 1))] =
          static_cast<std::uint8_t>(testing::uniform_int(rng, 0, 255));
    try {
      io::load_weights(noisy);
    } catch (const LoadError&) {
    }
  }
}

TEST(Weights, FileErrorsCarryPath) {
  const auto dir = testing::temp_dir("weights");
  const auto path = (dir / "w.plkw").string();
  io::write_file(path, io::Bytes{'P', 'L', 'K', 'W', 1, 0});
  try {
    io::read_weights(path);
    FAIL();
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(path), std::string::npos);
    // the offset prefix appears once, ahead of the path
    EXPECT_EQ(msg.rfind("offset "), 0u) << msg;
  }
  std::filesystem::remove_all(dir);
}

// ---- bench ----

TEST(Bench, SingleSampleAndFps) {
  BenchConfig cfg;
  cfg.model_width = 64;
  cfg.model_height = 32;
  cfg.image_width = 64;
  cfg.image_height = 32;
  cfg.iterations = 1;
  cfg.warmup = 0;
  const auto r = run_benchmark(cfg);
  ASSERT_EQ(r.entries.size(), 1u);
  const auto& e = r.entries[0];
  EXPECT_EQ(e.samples_ms.size(), 1u);
  EXPECT_TRUE(e.fast_path);
  EXPECT_NEAR(e.fps, 1000.0 / e.mean_ms, 1e-9);
  ASSERT_EQ(e.stages.size(), bench_stage_names().size());
  for (const auto& s : e.stages) EXPECT_EQ(s.skipped, s.name == "resize_in" || s.name == "resize_out") << s.name;
}

TEST(Bench, RepeatedRunsHaveSameFields) {
  BenchConfig cfg;
  cfg.model_width = 64;
  cfg.model_height = 32;
  cfg.image_width = 100;
  cfg.image_height = 40;
  cfg.iterations = 3;
  cfg.warmup = 1;
  const auto a = run_benchmark(cfg), b = run_benchmark(cfg);
  const auto fa = io::bench_entry_fields(a.entries[0]), fb = io::bench_entry_fields(b.entries[0]);
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i].first, fb[i].first);
  EXPECT_FALSE(a.entries[0].fast_path);
  for (const auto& s : a.entries[0].stages) EXPECT_FALSE(s.skipped);
  EXPECT_LE(a.entries[0].p50_ms, a.entries[0].p95_ms);
}

TEST(Bench, RejectsBadConfig) {
  BenchConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(run_benchmark(cfg), ArgumentError);
  cfg.iterations = 1;
  cfg.model_width = 100;
  EXPECT_THROW(run_benchmark(cfg), ArgumentError);
}

TEST(Bench, PercentileInterpolates) {
  EXPECT_EQ(detail::percentile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_EQ(detail::percentile({5}, 0.95), 5.0);
  EXPECT_NEAR(detail::percentile({0, 10}, 0.95), 9.5, 1e-12);
}

TEST(Report, KeyValueAndJson) {
  EvalReport r;
  r.abs_rel = 0.125;
  r.delta1 = 1.0;
  r.n_valid = 3;
  r.scaling = "median";
  const auto kv = io::to_key_value(io::eval_fields(r));
  EXPECT_NE(kv.find("abs_rel=0.125\n"), std::string::npos);
  EXPECT_NE(kv.find("delta1=1\n"), std::string::npos);
  EXPECT_NE(kv.find("n_valid=3\n"), std::string::npos);
  EXPECT_NE(kv.find("scaling=median\n"), std::string::npos);
  const auto j = io::to_json(io::eval_fields(r));
  EXPECT_EQ(j["n_valid"], 3);
  EXPECT_EQ(j["scaling"], "median");
}

}  // namespace
}  // namespace pld
