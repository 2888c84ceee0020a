#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "endodepth/config.h"
#include "endodepth/io.h"
#include "endodepth/metrics.h"
#include "test_util.h"

namespace endodepth {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("endodepth_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

MetricsReport OracleMetrics(const std::vector<double>& pred, const std::vector<double>& gt, double clip) {
  MetricsReport r;
  double a = 0, s = 0, q = 0, l = 0, in = 0, n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > clip) continue;
    const double d = pred[i] > clip ? clip : pred[i];
    a += std::fabs(d - gt[i]) / gt[i];
    s += (d - gt[i]) * (d - gt[i]) / gt[i];
    q += (d - gt[i]) * (d - gt[i]);
    l += (std::log(d) - std::log(gt[i])) * (std::log(d) - std::log(gt[i]));
    if (d / gt[i] < 1.25 && gt[i] / d < 1.25) in += 1;
    n += 1;
  }
  r.abs_rel = a / n;
  r.sq_rel = s / n;
  r.rmse = std::sqrt(q / n);
  r.rmse_log = std::sqrt(l / n);
  r.delta = 100 * in / n;
  r.n = static_cast<std::size_t>(n);
  return r;
}

TEST(Metrics, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const DepthMap gt = testing::RandomDepth(8, 8, 40, 170, 2 * seed);
    const DepthMap pred = testing::RandomDepth(8, 8, 30, 200, 2 * seed + 1);
    const MetricsReport r = ComputeMetrics(pred, gt);
    const MetricsReport o = OracleMetrics(pred.values(), gt.values(), 150.0);
    EXPECT_NEAR(r.abs_rel, o.abs_rel, 1e-12);
    EXPECT_NEAR(r.sq_rel, o.sq_rel, 1e-12);
    EXPECT_NEAR(r.rmse, o.rmse, 1e-12);
    EXPECT_NEAR(r.rmse_log, o.rmse_log, 1e-12);
    EXPECT_NEAR(r.delta, o.delta, 1e-12);
    EXPECT_EQ(r.n, o.n);
  }
}

TEST(Metrics, AnalyticCases) {
  const DepthMap gt = testing::RandomDepth(6, 5, 40, 120, 1);
  const MetricsReport same = ComputeMetrics(gt, gt);
  EXPECT_EQ(same.abs_rel, 0.0);
  EXPECT_EQ(same.sq_rel, 0.0);
  EXPECT_EQ(same.rmse, 0.0);
  EXPECT_EQ(same.rmse_log, 0.0);
  EXPECT_EQ(same.delta, 100.0);
  EXPECT_EQ(same.n, 30u);

  DepthMap pred = gt;
  for (double& v : pred.mutable_data()) v *= 1.1;
  const MetricsReport r = ComputeMetrics(pred, gt);
  EXPECT_NEAR(r.abs_rel, 0.1, 1e-12);
  EXPECT_NEAR(r.rmse_log, 0.095310, 1e-6);
  EXPECT_NEAR(r.rmse_log, std::log(1.1), 1e-12);
  EXPECT_EQ(r.delta, 100.0);
}

TEST(Metrics, ClippingAndGroundTruthMask) {
  DepthMap gt(3, 1, 100.0), pred(3, 1, 100.0);
  gt(2, 0) = 200.0;
  pred(1, 0) = 300.0;
  MetricsConfig cfg;
  const MetricsReport masked = ComputeMetrics(pred, gt, cfg);
  EXPECT_EQ(masked.n, 2u);
  EXPECT_NEAR(masked.abs_rel, 0.25, 1e-15);
  cfg.mask_gt_beyond_clip = false;
  const MetricsReport kept = ComputeMetrics(pred, gt, cfg);
  EXPECT_EQ(kept.n, 3u);
  EXPECT_NEAR(kept.abs_rel, (0.5 + 100.0 / 200.0) / 3.0, 1e-15);
  EXPECT_THROW(ComputeMetrics(pred, DepthMap(2, 1, 1.0)), std::invalid_argument);
  EXPECT_THROW(ComputeMetrics(DepthMap(1, 1, 1.0), DepthMap(1, 1, 500.0)), std::domain_error);
}

TEST(Metrics, PermutationInvariant) {
  const DepthMap gt = testing::RandomDepth(7, 7, 40, 140, 5);
  const DepthMap pred = testing::RandomDepth(7, 7, 40, 140, 6);
  std::vector<std::size_t> order(49);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  DepthMap pg(7, 7, 1.0), pp(7, 7, 1.0);
  for (std::size_t i = 0; i < 49; ++i) {
    pg.mutable_data()[i] = gt.values()[order[i]];
    pp.mutable_data()[i] = pred.values()[order[i]];
  }
  const MetricsReport a = ComputeMetrics(pred, gt), b = ComputeMetrics(pp, pg);
  EXPECT_NEAR(a.abs_rel, b.abs_rel, 1e-12);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_NEAR(a.rmse_log, b.rmse_log, 1e-12);
  EXPECT_EQ(a.delta, b.delta);
}

TEST(MedianScale, Examples) {
  DepthMap pred(3, 1, 2.0), gt(3, 1, 4.0);
  pred(0, 0) = 1.0;
  gt(2, 0) = 9.0;
  EXPECT_EQ(MedianScale(pred, gt).factor, 2.0);
  EXPECT_EQ(MedianScale(gt, gt).factor, 1.0);
  DepthMap even(4, 1, 1.0);
  even(1, 0) = 2.0;
  even(2, 0) = 4.0;
  even(3, 0) = 8.0;
  EXPECT_EQ(MedianScale(even, DepthMap(4, 1, 6.0)).factor, 2.0);
}

TEST(MedianScale, HomogeneousAndIdempotent) {
  const DepthMap gt = testing::RandomDepth(9, 8, 40, 150, 7);
  for (double c : {0.01, 0.5, 3.0, 250.0}) {
    DepthMap pred = gt;
    for (double& v : pred.mutable_data()) v *= c;
    const MedianScaled s = MedianScale(pred, gt);
    for (std::size_t i = 0; i < gt.pixel_count(); ++i)
      EXPECT_NEAR(s.depth.values()[i], gt.values()[i], 1e-12 * gt.values()[i]);
  }
  const DepthMap pred = testing::RandomDepth(9, 8, 10, 20, 8);
  const MedianScaled once = MedianScale(pred, gt);
  EXPECT_NEAR(MedianScale(once.depth, gt).factor, 1.0, 1e-12);
}

TEST(Pfm, RoundTripIsBitExact) {
  const fs::path dir = TempDir("pfm");
  Grid g(5, 3, 1);
  Rng rng(1);
  for (double& v : g.mutable_data()) v = static_cast<float>(UniformReal(rng, -100, 100));
  WritePfm(dir / "a.pfm", g);
  EXPECT_EQ(ReadPfm(dir / "a.pfm").values(), g.values());
  const ImageBuffer rgb = testing::RandomImage(4, 6, 3, 2);
  ImageBuffer narrowed = rgb;
  for (double& v : narrowed.mutable_data()) v = static_cast<float>(v);
  WritePfm(dir / "b.pfm", narrowed);
  const ImageBuffer back = ReadImagePfm(dir / "b.pfm");
  EXPECT_EQ(back.channels(), 3);
  EXPECT_EQ(back.values(), narrowed.values());
  // Writing what was read gives identical bytes.
  WritePfm(dir / "c.pfm", back);
  std::ifstream b1(dir / "b.pfm", std::ios::binary), b2(dir / "c.pfm", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(b1), {}),
            std::string(std::istreambuf_iterator<char>(b2), {}));
}

TEST(Pfm, IdentityFixtureReads) {
  const DepthMap d = ReadDepthPfm(ENDODEPTH_FIXTURE_DIR "/eval_identity/depth.pfm");
  ASSERT_EQ(d.width(), 8);
  ASSERT_EQ(d.height(), 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(d(x, y), 40 + 3 * x + 7 * y + 0.25 * ((x * y) % 3));
}

TEST(Pfm, MalformedFilesNameThePath) {
  const fs::path dir = TempDir("pfm_bad");
  WriteText(dir / "header.pfm", "P7\n2 2\n-1\n");
  WriteText(dir / "short.pfm", "Pf\n4 4\n-1\n0123");
  WriteText(dir / "size.pfm", "Pf\n-4 4\n-1\n");
  for (const char* name : {"header.pfm", "short.pfm", "size.pfm", "missing.pfm"}) {
    try {
      ReadPfm(dir / name);
      ADD_FAILURE() << name << " was accepted";
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
    }
  }
  WriteText(dir / "neg.pfm", "");
  DepthMap bad(1, 1, 1.0);
  bad.mutable_data()[0] = 0.0;
  WritePfm(dir / "zero.pfm", bad);
  EXPECT_ANY_THROW(ReadDepthPfm(dir / "zero.pfm"));
}

TEST(Pnm, RoundTrips) {
  const fs::path dir = TempDir("pnm");
  for (int channels : {1, 3})
    for (int bits : {8, 16}) {
      const double levels = bits == 8 ? 255.0 : 65535.0;
      ImageBuffer img = testing::RandomImage(7, 4, channels, channels + bits);
      for (double& v : img.mutable_data()) v = std::round(v * levels) / levels;
      const fs::path path = dir / (std::to_string(bits) + (channels == 1 ? ".pgm" : ".ppm"));
      WritePnm(path, img, bits);
      const ImageBuffer back = ReadImage(path);
      ASSERT_EQ(back.channels(), channels);
      for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.values()[i], img.values()[i], 1e-15);
    }
  WriteText(dir / "bad.pgm", "P5\n2 2\n255\n\x01");
  EXPECT_THROW(ReadPnm(dir / "bad.pgm"), IoError);
}

TEST(Ply, RoundTrip) {
  const fs::path dir = TempDir("ply");
  PointCloud cloud;
  cloud.points = {Vec3(0.125, -3.5, 70.0), Vec3(1e-3, 2.0 / 3.0, 149.75)};
  WritePly(dir / "plain.ply", cloud);
  const PointCloud back = ReadPly(dir / "plain.ply");
  ASSERT_EQ(back.points.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(back.points[i], cloud.points[i]);
  EXPECT_TRUE(back.colors.empty());
  cloud.colors = {Vec3(0, 1, 51.0 / 255.0), Vec3(1, 0, 0)};
  WritePly(dir / "color.ply", cloud);
  const PointCloud c = ReadPly(dir / "color.ply");
  ASSERT_EQ(c.colors.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR((c.colors[i] - cloud.colors[i]).norm(), 0.0, 1e-15);
  WriteText(dir / "bad.ply", "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nend_header\n1\n");
  EXPECT_THROW(ReadPly(dir / "bad.ply"), IoError);
}

TEST(Text, IntrinsicsPosesAndTrace) {
  const fs::path dir = TempDir("text");
  Intrinsics K;
  K.fx = 128.25;
  K.fy = 127.0 / 3.0;
  K.cx = 63.5;
  K.cy = 47.5;
  K.width = 128;
  K.height = 96;
  WriteIntrinsics(dir / "K.txt", K);
  const Intrinsics k2 = ReadIntrinsics(dir / "K.txt");
  EXPECT_EQ(k2.fx, K.fx);
  EXPECT_EQ(k2.fy, K.fy);
  EXPECT_EQ(k2.width, 128);
  const std::vector<RigidTransform> poses = {
      RigidTransform::Identity(), RigidTransform::FromAxisAngle({0.1, -0.2, 0.3}, {1, 2, 3})};
  WritePoses(dir / "poses.txt", poses);
  const auto back = ReadPoses(dir / "poses.txt");
  ASSERT_EQ(back.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(back[i].Matrix(), poses[i].Matrix());

  RefineResult r;
  r.depth = DepthMap(2, 2, 1.0);
  LossReport a, b;
  a.total = 1.5;
  a.ph = 1.25;
  b.total = 0.5;
  r.trace = {a, b};
  r.trace_level = {0, 2};
  WriteLossTraceCsv(dir / "trace.csv", r);
  std::ifstream in(dir / "trace.csv");
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "iteration,level,total,ph,ct,st,es");
  EXPECT_EQ(row0.substr(0, 12), "0,0,1.5,1.25");
  EXPECT_EQ(row1.substr(0, 8), "1,2,0.5,");
  EXPECT_EQ(FormatDouble(0.1), "0.1");
}

TEST(Config, UnknownAndDuplicateKeysNameFileLineKey) {
  RunConfig cfg;
  try {
    cfg.LoadString("# comment\nscene.width = 32\nscene.colour = red\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.file(), "run.cfg");
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.key(), "scene.colour");
    EXPECT_EQ(std::string(e.what()), "run.cfg:3: key 'scene.colour': unknown key");
  }
  try {
    RunConfig().LoadString("scene.width = 32\n\nscene.width = 16\n", "dup.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.key(), "scene.width");
  }
  EXPECT_THROW(RunConfig().LoadString("just words\n", "x.cfg"), ConfigError);
  EXPECT_THROW(RunConfig().Set("nope.key", "1"), ConfigError);
}

TEST(Config, BadValuesPointAtTheirOrigin) {
  RunConfig cfg;
  cfg.LoadString("scene.width = 32\nscene.fx = wide\n", "v.cfg");
  EXPECT_EQ(cfg.GetInt("scene.width"), 32);
  try {
    cfg.GetDouble("scene.fx");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("v.cfg:2: key 'scene.fx'"), std::string::npos);
  }
}

TEST(Config, EffectiveConfigRoundTrips) {
  RunConfig cfg;
  cfg.LoadFile(ENDODEPTH_FIXTURE_DIR "/two_plane_refine.cfg");
  cfg.Set("run.seed", "9");
  std::ostringstream first;
  cfg.Write(first);
  std::string text = first.str();
  // Drop the version line before loading it back.
  text = text.substr(text.find('\n') + 1);
  RunConfig again;
  again.LoadString(text, "echo");
  std::ostringstream second;
  again.Write(second);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(again.GetUint("run.seed"), 9u);
  EXPECT_EQ(first.str().rfind("# ", 0), 0u);
}

TEST(Config, DepthRangePersists) {
  RunConfig cfg;
  StoreDepthRange(cfg, {51.25, 149.5, 0.9});
  const DepthRangeState s = DepthRangeFromConfig(cfg);
  EXPECT_EQ(s.min_mm, 51.25);
  EXPECT_EQ(s.max_mm, 149.5);
  EXPECT_EQ(s.momentum, 0.9);
}

}  // namespace
}  // namespace endodepth
