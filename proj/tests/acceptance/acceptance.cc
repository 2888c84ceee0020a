// Runs every acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is non-zero when any criterion fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "endodepth/config.h"
#include "endodepth/costvolume.h"
#include "endodepth/geometry.h"
#include "endodepth/metrics.h"
#include "endodepth/patchmatch.h"
#include "endodepth/photometric.h"
#include "endodepth/pipeline.h"
#include "endodepth/random.h"
#include "endodepth/refine.h"
#include "endodepth/synth.h"
#include "endodepth/teaching.h"

namespace {

using namespace endodepth;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

RunConfig Fixture(const std::string& name, std::uint64_t seed = 0) {
  RunConfig cfg;
  cfg.LoadFile(fs::path(ENDODEPTH_FIXTURE_DIR) / name);
  cfg.Set("run.seed", std::to_string(seed));
  return cfg;
}

ImageBuffer RandomImage(int w, int h, Rng& rng) {
  ImageBuffer img(w, h, 1);
  for (double& v : img.mutable_data()) v = UniformUnit(rng);
  return img;
}

DepthMap RandomDepth(int w, int h, double lo, double hi, Rng& rng) {
  DepthMap d(w, h, lo);
  for (double& v : d.mutable_data()) v = UniformReal(rng, lo, hi);
  return d;
}

Outcome GeometryOracle() {
  Rng rng(1);
  double worst = 0.0, worst_trip = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Intrinsics K;
    K.width = UniformInt(rng, 16, 640);
    K.height = UniformInt(rng, 16, 480);
    K.fx = UniformReal(rng, 20, 800);
    K.fy = UniformReal(rng, 20, 800);
    K.cx = UniformReal(rng, 0, K.width - 1);
    K.cy = UniformReal(rng, 0, K.height - 1);
    Vec3 axis(UniformReal(rng, -1, 1), UniformReal(rng, -1, 1), UniformReal(rng, -1, 1));
    axis *= UniformReal(rng, 0, 0.3) / axis.norm();
    const Vec3 t(UniformReal(rng, -5, 5), UniformReal(rng, -5, 5), UniformReal(rng, -5, 5));
    const RigidTransform M = RigidTransform::FromAxisAngle(axis, t);
    const Vec2 p(UniformReal(rng, 0, K.width - 1), UniformReal(rng, 0, K.height - 1));
    const double d = UniformReal(rng, 20, 200);

    Eigen::Matrix4d Kh = Eigen::Matrix4d::Identity(), T = Eigen::Matrix4d::Identity();
    Kh(0, 0) = K.fx;
    Kh(1, 1) = K.fy;
    Kh(0, 2) = K.cx;
    Kh(1, 2) = K.cy;
    T.block<3, 3>(0, 0) = M.rotation();
    T.block<3, 1>(0, 3) = M.translation();
    const Eigen::Vector4d q = Kh * T * Kh.inverse() * Eigen::Vector4d(p.x() * d, p.y() * d, d, 1);
    const Projection r = Project(p, d, K, M);
    const Vec2 oracle(q(0) / q(2), q(1) / q(2));
    worst = std::max({worst, (r.pixel - oracle).norm() / std::max(1.0, oracle.norm()),
                      std::abs(r.depth - q(2)) / d});

    const Vec3 X = BackProject(p, d, K);
    const Vec3 h = K.Matrix() * X;
    worst_trip = std::max(worst_trip, (Vec2(h.x() / h.z(), h.y() / h.z()) - p).norm());
  }
  return {worst < 1e-9 && worst_trip < 1e-9,
          Fmt("1000 cases, max oracle error %.2e, max round-trip error %.2e", worst, worst_trip)};
}

Outcome Photoconsistency() {
  const RunConfig cfg = Fixture("plane_sweep.cfg");
  const SceneSpec spec = SceneSpecFromConfig(cfg);
  const auto views = Render(spec);
  double worst = 0.0;
  std::size_t valid = 0;
  for (std::size_t v = 1; v < views.size(); ++v) {
    const RigidTransform M = RelativePose(views[0].camera_to_world, views[v].camera_to_world);
    const auto warped = SynthesizeView(views[0].depth, views[v].image, spec.intrinsics, M);
    const LossMap err = PhotometricError(views[0].image, warped.image, warped.mask, {});
    worst = std::max(worst, err.MaskedMean());
    valid += err.mask.Count();
  }
  return {worst < 1e-3 && valid > 0,
          Fmt("%.0fx%.0f plane, max over sources of mean error %.2e on %.0f valid pixels",
              spec.intrinsics.width, spec.intrinsics.height, worst, static_cast<double>(valid))};
}

Outcome CostVolumeRecovery() {
  const RunConfig cfg = Fixture("plane_sweep.cfg");
  const SceneSpec spec = SceneSpecFromConfig(cfg);
  const auto views = Render(spec);
  const SweepRun run = RunSweep(views, spec.intrinsics, SweepFromConfig(cfg), DepthRangeFromConfig(cfg));
  const double nearest = NearestPlaneFraction(run, views[0].depth, views[0].image);
  MetricsConfig mc;
  const double abs_rel = ComputeMetrics(run.depth, views[0].depth, mc).abs_rel;
  const auto& planes = run.volume.plane_depths();
  const double bound = 0.5 * (planes[1] - planes[0]) / 100.0;
  return {nearest >= 0.95 && abs_rel <= bound,
          Fmt("nearest-plane fraction %.4f (>= 0.95), soft-argmin Abs Rel %.5f (<= %.5f)",
              nearest, abs_rel, bound)};
}

Outcome EmaContract() {
  DepthMap batch(2, 1, 30.0);
  batch(1, 0) = 90.0;
  const std::vector<DepthMap> b{batch};
  DepthRangeState s{1.0, 10.0, 0.99};
  double worst = 0.0, rate_err = 0.0;
  double prev_gap = 30.0 - s.min_mm;
  for (int n = 1; n <= 100; ++n) {
    s = UpdateDepthRange(s, b);
    const double r = std::pow(0.99, n);
    worst = std::max({worst, std::abs(s.min_mm - (30.0 + (1.0 - 30.0) * r)),
                      std::abs(s.max_mm - (90.0 + (10.0 - 90.0) * r))});
    const double gap = 30.0 - s.min_mm;
    rate_err = std::max(rate_err, std::abs((prev_gap - gap) / prev_gap - 0.01));
    prev_gap = gap;
  }
  return {worst <= 1e-12 && rate_err < 1e-9,
          Fmt("100 steps, max deviation from closed form %.2e, contraction rate error %.2e",
              worst, rate_err)};
}

Outcome GradientVerification() {
  const int n = 16;
  const double h = 1e-3;
  Rng rng(5);
  SceneInputs s;
  s.intrinsics.fx = s.intrinsics.fy = n;
  s.intrinsics.cx = s.intrinsics.cy = (n - 1) / 2.0;
  s.intrinsics.width = s.intrinsics.height = n;
  s.target = RandomImage(n, n, rng);
  s.sources = {RandomImage(n, n, rng), RandomImage(n, n, rng)};
  s.poses = {RigidTransform::FromAxisAngle({0.0, 0.01, 0.0}, {1.3, 0.2, 0.1}),
             RigidTransform::FromAxisAngle({0.01, 0.0, 0.0}, {-1.1, 0.4, -0.2})};
  KeypointConfig kc;
  kc.cell = 3;
  kc.threshold_factor = 0.5;
  s.domains = BuildSupportDomains(s.target, DetectKeypoints(s.target, kc), {});
  s.teacher = RandomDepth(n, n, 40, 150, rng);
  OcclusionMask mask(n, n, true);
  for (int y = 4; y < 9; ++y)
    for (int x = 2; x < 7; ++x) mask.Set(x, y, false);
  s.self_teaching = SelfTeachingInputs{RandomDepth(n, n, 40, 150, rng), mask};
  const DepthMap d = RandomDepth(n, n, 60, 120, rng);
  LossWeights ones;
  ones.lambda1 = ones.lambda2 = ones.lambda3 = ones.lambda4 = 1.0;
  const LossGradient g = LossGradientWrtDepth(s, d, ones, GradientMode::kAnalytic, h);

  const std::pair<const GradientField*, double LossReport::*> terms[] = {
      {&g.ph, &LossReport::ph}, {&g.ct, &LossReport::ct},
      {&g.st, &LossReport::st}, {&g.es, &LossReport::es}};
  double worst[4] = {0, 0, 0, 0};
  int checked = 0;
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    if (g.total.kinks[i]) continue;
    ++checked;
    DepthMap p = d, m = d;
    p.mutable_data()[i] += h;
    m.mutable_data()[i] -= h;
    const LossReport lp = TotalLoss(s, p, ones), lm = TotalLoss(s, m, ones);
    for (int t = 0; t < 4; ++t) {
      const double fd = (lp.*terms[t].second - lm.*terms[t].second) / (2 * h);
      const double a = terms[t].first->values[i];
      const double scale = std::max(std::abs(a), std::abs(fd));
      if (scale > 1e-10) worst[t] = std::max(worst[t], std::abs(a - fd) / scale);
    }
  }
  bool blocked = true;
  for (double v : g.teacher.values) blocked &= v == 0.0;
  for (double v : g.self_reference.values) blocked &= v == 0.0;
  const double max_rel = *std::max_element(worst, worst + 4);
  return {max_rel < 1e-4 && blocked && checked > d.pixel_count() / 2,
          Fmt("max relative error ph %.1e ct %.1e st %.1e es %.1e", worst[0], worst[1], worst[2],
              worst[3]) +
              (blocked ? ", stop-gradient operands exactly zero" : ", stop-gradient leak") +
              ", " + std::to_string(checked) + " pixels checked"};
}

Outcome RefinementConvergence() {
  const auto start = std::chrono::steady_clock::now();
  const RefineRun run = RunRefine(Fixture("two_plane_refine.cfg", 0));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double first = run.result.trace.front().total, last = run.result.trace.back().total;
  const int iterations = static_cast<int>(run.result.trace.size()) - 1;
  return {run.metrics.abs_rel < 0.05 && last < 0.1 * first && iterations <= 500 && secs < 60,
          Fmt("Abs Rel %.4f, loss %.2e -> %.2e", run.metrics.abs_rel, first, last) +
              Fmt(", %.0f iterations, %.1f s", iterations, secs)};
}

Outcome AdaptivePropagation() {
  // Co-planarity of members near the depth edge.
  double fixed_sum = 0.0, soft_sum = 0.0;
  int keypoints = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RunConfig cfg = Fixture("two_plane_refine.cfg", seed);
    const SceneSpec spec = SceneSpecFromConfig(cfg);
    SceneSpec single = spec;
    single.camera_to_world = {spec.camera_to_world[0]};
    const ImageBuffer target = Render(single)[0].image;
    const KeypointSet kps = DetectKeypoints(target, KeypointsFromConfig(cfg));
    PatchmatchConfig pc = PatchmatchFromConfig(cfg);
    pc.decoder = DecoderKind::kFixedGrid;
    const auto fixed = BuildSupportDomains(target, kps, pc);
    pc.decoder = DecoderKind::kSectorSoftArgmax;
    const auto soft = BuildSupportDomains(target, kps, pc);
    auto coplanar = [&](const SupportDomain& dom) {
      const double c = CastRay(spec, spec.camera_to_world[0], dom.center)->depth;
      int same = 0;
      for (std::size_t i = 1; i < dom.members.size(); ++i) {
        const double m = CastRay(spec, spec.camera_to_world[0], dom.members[i])->depth;
        same += std::abs(m - c) <= 0.01 * c;
      }
      return static_cast<double>(same) / static_cast<double>(dom.members.size() - 1);
    };
    for (std::size_t k = 0; k < kps.size(); ++k) {
      if (std::abs(kps.points[k].x - spec.intrinsics.cx) > 2.0) continue;
      fixed_sum += coplanar(fixed[k]);
      soft_sum += coplanar(soft[k]);
      ++keypoints;
    }
  }
  const double fixed_frac = fixed_sum / keypoints, soft_frac = soft_sum / keypoints;

  // Refinement with each decoder, averaged over seeds.
  double fixed_abs = 0.0, soft_abs = 0.0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    RunConfig cfg = Fixture("two_plane_refine.cfg", seed);
    cfg.Set("patchmatch.decoder", "fixed");
    fixed_abs += RunRefine(cfg).metrics.abs_rel / seeds;
    cfg.Set("patchmatch.decoder", "softargmax");
    soft_abs += RunRefine(cfg).metrics.abs_rel / seeds;
  }
  return {keypoints > 0 && soft_frac >= fixed_frac && soft_abs <= fixed_abs,
          Fmt("co-planar members soft-argmax %.4f vs fixed %.4f over %.0f edge keypoints",
              soft_frac, fixed_frac, keypoints) +
              Fmt("; mean Abs Rel over 10 seeds soft-argmax %.4f vs fixed %.4f", soft_abs, fixed_abs)};
}

Outcome TeachingAlgebra() {
  Rng rng(8);
  bool ok = true;
  double worst_scale = 0.0;
  for (int t = 0; t < 20; ++t) {
    const DepthMap a = RandomDepth(12, 9, 1, 200, rng), b = RandomDepth(12, 9, 1, 200, rng);
    OcclusionMask r(12, 9, true);
    for (std::size_t i = 0; i < r.size(); ++i) r.Set(i, UniformUnit(rng) < 0.7);
    ok &= CrossTeachingLoss(a, a).value == 0.0 && SelfTeachingLoss(a, a, r).value == 0.0;
    ok &= SelfTeachingLoss(a, b, OcclusionMask(12, 9, false)).value == 0.0;
    const ConsistencyLoss ct = CrossTeachingLoss(a, b), st = SelfTeachingLoss(a, b, r);
    for (double v : ct.map.values) ok &= v >= 0.0 && v < 1.0;
    for (std::size_t i = 0; i < st.map.values.size(); ++i)
      if (st.map.mask[i]) ok &= st.map.values[i] >= 0.0 && st.map.values[i] < 1.0;
    const double c = UniformReal(rng, 0.01, 100);
    DepthMap as = a, bs = b;
    for (double& v : as.mutable_data()) v *= c;
    for (double& v : bs.mutable_data()) v *= c;
    worst_scale = std::max({worst_scale,
                            std::abs(CrossTeachingLoss(as, bs, 0).value - CrossTeachingLoss(a, b, 0).value),
                            std::abs(SelfTeachingLoss(as, bs, r, 0).value - SelfTeachingLoss(a, b, r, 0).value)});
  }
  return {ok && worst_scale <= 1e-15,
          std::string(ok ? "zero at equality, bounded in [0,1), R empty gives 0" : "algebra violated") +
              Fmt(", max joint-scaling change %.1e with eps=0", worst_scale)};
}

Outcome SelfTeachingRobustness() {
  double with = 0.0, without = 0.0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    RunConfig cfg = Fixture("two_plane_gamma.cfg", seed);
    with += RunRefine(cfg).metrics.abs_rel / seeds;
    cfg.Set("loss.lambda3", "0");
    without += RunRefine(cfg).metrics.abs_rel / seeds;
  }
  return {with <= without,
          Fmt("mean Abs Rel over 5 seeds with self-teaching %.4f vs without %.4f", with, without)};
}

Outcome MetricsOracle() {
  Rng rng(10);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const DepthMap gt = RandomDepth(8, 8, 40, 170, rng), pred = RandomDepth(8, 8, 30, 200, rng);
    double a = 0, s = 0, q = 0, l = 0, in = 0, n = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      const double g = gt.values()[i];
      if (g > 150.0) continue;
      const double d = std::min(pred.values()[i], 150.0);
      a += std::fabs(d - g) / g;
      s += (d - g) * (d - g) / g;
      q += (d - g) * (d - g);
      l += std::pow(std::log(d) - std::log(g), 2);
      in += std::max(d / g, g / d) < 1.25;
      n += 1;
    }
    const MetricsReport r = ComputeMetrics(pred, gt);
    worst = std::max({worst, std::abs(r.abs_rel - a / n), std::abs(r.sq_rel - s / n),
                      std::abs(r.rmse - std::sqrt(q / n)), std::abs(r.rmse_log - std::sqrt(l / n)),
                      std::abs(r.delta - 100 * in / n)});
  }
  const DepthMap gt = RandomDepth(8, 8, 40, 120, rng);
  DepthMap pred = gt;
  for (double& v : pred.mutable_data()) v *= 1.1;
  const MetricsReport r = ComputeMetrics(pred, gt);
  const bool analytic = std::abs(r.abs_rel - 0.1) < 5e-7 && std::abs(r.rmse_log - 0.095310) <= 1e-6 &&
                        r.delta == 100.0;
  return {worst <= 1e-12 && analytic,
          Fmt("100 pairs, max oracle deviation %.1e; 1.1x gt gives abs_rel %.6f rmse_log %.6f delta %.0f%%",
              worst, r.abs_rel, r.rmse_log, r.delta)};
}

#ifdef ENDODEPTH_CLI_PATH
int RunCli(const std::string& args) {
  const std::string cmd = std::string("'") + ENDODEPTH_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::map<std::string, std::string> Files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}
#endif

Outcome Determinism() {
#ifdef ENDODEPTH_CLI_PATH
  const fs::path root = fs::temp_directory_path() / "endodepth_acceptance_determinism";
  fs::remove_all(root);
  const std::string fixtures = ENDODEPTH_FIXTURE_DIR;
  const std::string depth = fixtures + "/eval_identity/depth.pfm";
  const std::vector<std::string> commands = {
      "--config '" + fixtures + "/plane_sweep.cfg' render",
      "--config '" + fixtures + "/plane_sweep.cfg' sweep --update-range",
      "--config '" + fixtures + "/two_plane_gamma.cfg' --set refine.iterations=20 refine",
      "--set perturb.kind=jitter simulate",
      "--set scene.width=8 --set scene.height=6 --set scene.cx=3.5 --set scene.cy=2.5 pointcloud --depth '" + depth + "'",
      "eval --pred '" + depth + "' --gt '" + depth + "'",
  };
  std::size_t files = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = root / (std::to_string(i) + (k ? "b" : "a"));
      if (RunCli("--seed 7 --out '" + out.string() + "' " + commands[i]) != 0)
        return {false, "command failed: " + commands[i]};
      runs[k] = Files(out);
    }
    if (runs[0] != runs[1] || runs[0].empty()) return {false, "outputs differ: " + commands[i]};
    files += runs[0].size();
  }
  return {true, std::to_string(commands.size()) + " subcommands run twice with --seed 7, " +
                    std::to_string(files) + " output files byte-identical"};
#else
  return {false, "command-line tool not built"};
#endif
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry oracle equivalence", GeometryOracle},
      {"photoconsistency at truth", Photoconsistency},
      {"cost-volume recovery", CostVolumeRecovery},
      {"EMA contract", EmaContract},
      {"gradient verification", GradientVerification},
      {"refinement convergence", RefinementConvergence},
      {"adaptive-propagation advantage", AdaptivePropagation},
      {"teaching-loss algebra", TeachingAlgebra},
      {"self-teaching robustness direction", SelfTeachingRobustness},
      {"metrics oracle", MetricsOracle},
      {"determinism", Determinism},
  };
  const std::map<int, double> budgets = {{1, 1.0}, {3, 5.0}, {6, 60.0}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (auto it = budgets.find(id); it != budgets.end() && secs >= it->second) {
      o.pass = false;
      o.detail += Fmt("; over the %.0f s budget", it->second);
    }
    failures += !o.pass;
    std::printf("%s criterion %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
