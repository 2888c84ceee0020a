#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "endodepth/config.h"
#include "endodepth/costvolume.h"
#include "endodepth/geometry.h"
#include "endodepth/io.h"
#include "endodepth/metrics.h"
#include "endodepth/patchmatch.h"
#include "endodepth/pipeline.h"
#include "endodepth/synth.h"
#include "endodepth/teaching.h"

namespace fs = std::filesystem;
using namespace endodepth;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "endodepth_out";
  std::vector<std::string> overrides;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig LoadConfig(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config.empty()) cfg.LoadFile(g.config);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cfg.Set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (g.seed) cfg.Set("run.seed", std::to_string(*g.seed));
  return cfg;
}

fs::path OutDir(const GlobalOptions& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

std::string ViewName(std::size_t v, const char* what, const char* ext) {
  return "view" + std::to_string(v) + "_" + what + ext;
}

void WritePreview(const fs::path& path_no_ext, const ImageBuffer& image) {
  fs::path p = path_no_ext;
  p += image.channels() == 1 ? ".pgm" : ".ppm";
  WritePnm(p, image, 8);
}

ImageBuffer MaskImage(const OcclusionMask& mask) {
  ImageBuffer img(mask.width(), mask.height(), 1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) img.at(x, y) = mask(x, y) ? 1.0 : 0.0;
  }
  return img;
}

std::vector<RigidTransform> CameraToWorld(const std::vector<RenderedView>& views) {
  std::vector<RigidTransform> out;
  for (const RenderedView& v : views) out.push_back(v.camera_to_world);
  return out;
}

// Views written by `render`: images, optional depths, camera-to-world poses.
std::vector<RenderedView> LoadViews(const fs::path& dir, Intrinsics& K) {
  K = ReadIntrinsics(dir / "intrinsics.txt");
  const std::vector<RigidTransform> poses = ReadPoses(dir / "poses.txt");
  std::vector<RenderedView> views;
  for (std::size_t v = 0; v < poses.size(); ++v) {
    RenderedView view;
    view.image = ReadImagePfm(dir / ViewName(v, "image", ".pfm"));
    const fs::path depth = dir / ViewName(v, "depth", ".pfm");
    if (fs::exists(depth)) view.depth = ReadDepthPfm(depth);
    view.camera_to_world = poses[v];
    views.push_back(std::move(view));
  }
  return views;
}

void WriteMetricsTable(std::ostream& out, const std::string& label, const MetricsReport& m) {
  out << label << " abs_rel=" << FormatDouble(m.abs_rel) << " sq_rel=" << FormatDouble(m.sq_rel)
      << " rmse=" << FormatDouble(m.rmse) << " rmse_log=" << FormatDouble(m.rmse_log)
      << " delta=" << FormatDouble(m.delta) << " n=" << m.n << '\n';
}

int RunRender(const GlobalOptions& g) {
  RunConfig cfg = LoadConfig(g);
  const SceneSpec spec = SceneSpecFromConfig(cfg);
  const std::vector<RenderedView> views = Render(spec);
  const fs::path out = OutDir(g);
  for (std::size_t v = 0; v < views.size(); ++v) {
    WritePfm(out / ViewName(v, "image", ".pfm"), views[v].image);
    WritePfm(out / ViewName(v, "depth", ".pfm"), views[v].depth);
    WritePreview(out / ("view" + std::to_string(v) + "_image"), views[v].image);
  }
  WriteIntrinsics(out / "intrinsics.txt", spec.intrinsics);
  WritePoses(out / "poses.txt", CameraToWorld(views));
  cfg.WriteFile(out / "run_config.txt");
  std::cout << "rendered " << views.size() << " views of " << GeometryKindName(spec.geometry)
            << " (" << spec.intrinsics.width << "x" << spec.intrinsics.height << ") to "
            << out.string() << '\n';
  return 0;
}

int RunSweepCommand(const GlobalOptions& g, const std::string& input, bool update_range) {
  RunConfig cfg = LoadConfig(g);
  Intrinsics K;
  std::vector<RenderedView> views;
  if (input.empty()) {
    const SceneSpec spec = SceneSpecFromConfig(cfg);
    views = Render(spec);
    K = spec.intrinsics;
  } else {
    views = LoadViews(input, K);
  }
  const DepthRangeState range = DepthRangeFromConfig(cfg);
  const SweepRun run = RunSweep(views, K, SweepFromConfig(cfg), range);
  const fs::path out = OutDir(g);
  WritePfm(out / "sweep_depth.pfm", run.depth);

  std::ostringstream report;
  report << "planes " << run.sweep.planes << '\n'
         << "range_mm " << FormatDouble(range.min_mm) << ' ' << FormatDouble(range.max_mm) << '\n';
  const DepthMap& truth = views[0].depth;
  if (!truth.empty()) {
    report << "nearest_plane_fraction "
           << FormatDouble(NearestPlaneFraction(run, truth, views[0].image)) << '\n';
    MetricsConfig mc = MetricsFromConfig(cfg);
    WriteMetricsTable(report, "soft_argmin", ComputeMetrics(run.depth, truth, mc));
  }
  if (update_range) {
    const DepthRangeState next = UpdateDepthRange(range, std::span(&run.depth, 1));
    StoreDepthRange(cfg, next);
    report << "updated_range_mm " << FormatDouble(next.min_mm) << ' ' << FormatDouble(next.max_mm)
           << '\n';
  }
  std::ofstream(out / "sweep_report.txt") << report.str();
  cfg.WriteFile(out / "run_config.txt");
  std::cout << report.str();
  return 0;
}

int RunRefineCommand(const GlobalOptions& g) {
  RunConfig cfg = LoadConfig(g);
  const RefineRun run = RunRefine(cfg);
  const fs::path out = OutDir(g);
  WritePfm(out / "initial_depth.pfm", run.initial);
  WritePfm(out / "refined_depth.pfm", run.result.depth);
  WritePfm(out / "gt_depth.pfm", run.views[0].depth);
  if (run.reference) WritePfm(out / "reference_depth.pfm", run.reference->depth);
  WriteLossTraceCsv(out / "loss_trace.csv", run.result);
  {
    std::ofstream domains(out / "support_domains.txt");
    WriteSupportDomainTable(domains, run.inputs.domains);
  }
  std::ostringstream report;
  report << "keypoints " << run.keypoints.size() << '\n'
         << "iterations " << run.result.trace.size() - 1 << '\n'
         << "loss_initial " << FormatDouble(run.result.trace.front().total) << '\n'
         << "loss_final " << FormatDouble(run.result.trace.back().total) << '\n';
  WriteMetricsTable(report, "metric", run.metrics);
  if (cfg.GetBool("metrics.median_scale")) {
    const MedianScaled scaled = MedianScale(run.result.depth, run.views[0].depth);
    WriteMetricsTable(report, "median_scaled",
                      ComputeMetrics(scaled.depth, run.views[0].depth, MetricsFromConfig(cfg)));
  }
  std::ofstream(out / "refine_report.txt") << report.str();
  cfg.WriteFile(out / "run_config.txt");
  std::cout << report.str();
  return 0;
}

int RunEval(const GlobalOptions& g, const std::string& pred_path, const std::string& gt_path) {
  RunConfig cfg = LoadConfig(g);
  const DepthMap gt = ReadDepthPfm(gt_path);
  DepthMap pred = ReadDepthPfm(pred_path);
  double factor = 1.0;
  if (cfg.GetBool("metrics.median_scale")) {
    MedianScaled scaled = MedianScale(pred, gt);
    pred = std::move(scaled.depth);
    factor = scaled.factor;
  }
  const MetricsReport m = ComputeMetrics(pred, gt, MetricsFromConfig(cfg));
  const fs::path out = OutDir(g);
  std::ostringstream csv;
  csv << "abs_rel,sq_rel,rmse,rmse_log,delta,n,scale\n"
      << FormatDouble(m.abs_rel) << ',' << FormatDouble(m.sq_rel) << ',' << FormatDouble(m.rmse)
      << ',' << FormatDouble(m.rmse_log) << ',' << FormatDouble(m.delta) << ',' << m.n << ','
      << FormatDouble(factor) << '\n';
  std::ofstream(out / "metrics.csv") << csv.str();
  cfg.WriteFile(out / "run_config.txt");
  char row[256];
  std::snprintf(row, sizeof row, "%10.6f %10.6f %10.6f %10.6f %10.4f %8zu\n", m.abs_rel, m.sq_rel,
                m.rmse, m.rmse_log, m.delta, m.n);
  std::cout << "    abs_rel     sq_rel       rmse   rmse_log   delta(%)        n\n" << row;
  return 0;
}

int RunPointcloud(const GlobalOptions& g, const std::string& depth_path,
                  const std::string& image_path, const std::string& intrinsics_path) {
  RunConfig cfg = LoadConfig(g);
  const DepthMap depth = ReadDepthPfm(depth_path);
  Intrinsics K = intrinsics_path.empty() ? SceneSpecFromConfig(cfg).intrinsics
                                         : ReadIntrinsics(intrinsics_path);
  if (K.width != depth.width() || K.height != depth.height()) {
    throw std::invalid_argument("intrinsics are " + std::to_string(K.width) + "x" +
                                std::to_string(K.height) + " but the depth map is " +
                                std::to_string(depth.width()) + "x" +
                                std::to_string(depth.height()));
  }
  std::optional<ImageBuffer> color;
  if (!image_path.empty()) color = ReadImage(image_path);
  const PointCloud cloud = DepthToPointCloud(depth, K, color);
  const fs::path out = OutDir(g);
  WritePly(out / "cloud.ply", cloud);
  cfg.WriteFile(out / "run_config.txt");
  std::cout << "wrote " << cloud.points.size() << " points to " << (out / "cloud.ply").string()
            << '\n';
  return 0;
}

int RunSimulate(const GlobalOptions& g, const std::string& image_path) {
  RunConfig cfg = LoadConfig(g);
  const ImageBuffer image = image_path.empty() ? Render(SceneSpecFromConfig(cfg))[0].image
                                               : ReadImage(image_path);
  const SimulatedAppearance sim = ApplyAppearanceSimulator(image, SimulatorFromConfig(cfg));
  const fs::path out = OutDir(g);
  WritePfm(out / "simulated.pfm", sim.image);
  WritePreview(out / "simulated", sim.image);
  WritePnm(out / "unoccluded.pgm", MaskImage(sim.unoccluded), 8);
  std::ostringstream params;
  params << "gamma " << FormatDouble(sim.params.gamma) << '\n'
         << "brightness " << FormatDouble(sim.params.jitter.brightness) << '\n'
         << "contrast " << FormatDouble(sim.params.jitter.contrast) << '\n'
         << "saturation " << FormatDouble(sim.params.jitter.saturation) << '\n'
         << "hue " << FormatDouble(sim.params.jitter.hue) << '\n';
  for (const CropRect& c : sim.params.crops) {
    params << "crop " << c.x << ' ' << c.y << ' ' << c.width << ' ' << c.height << '\n';
  }
  std::ofstream(out / "appearance.txt") << params.str();
  cfg.WriteFile(out / "run_config.txt");
  std::cout << params.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised endoscopic depth toolkit on synthetic scenes"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config, "Config file of 'section.key = value' lines")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides run.seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Overrides one key, KEY=VALUE (repeatable)");

  auto* render = app.add_subcommand("render", "Render the configured scene to PFM views");

  std::string sweep_input;
  bool update_range = false;
  auto* sweep = app.add_subcommand("sweep", "Plane-sweep cost volume and soft-argmin depth");
  sweep->add_option("--input", sweep_input, "Directory written by render (default: render now)")
      ->check(CLI::ExistingDirectory);
  sweep->add_flag("--update-range", update_range,
                  "Apply one EMA depth-range update from the swept depth");

  auto* refine = app.add_subcommand("refine", "Coarse-to-fine depth refinement");

  std::string pred, gt;
  auto* eval = app.add_subcommand("eval", "Depth metrics of a prediction against ground truth");
  eval->add_option("--pred", pred, "Predicted depth (PFM)")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "Ground-truth depth (PFM)")->required()->check(CLI::ExistingFile);

  std::string cloud_depth, cloud_image, cloud_intrinsics;
  auto* pointcloud = app.add_subcommand("pointcloud", "Back-project a depth map to PLY");
  pointcloud->add_option("--depth", cloud_depth, "Depth (PFM)")->required()->check(CLI::ExistingFile);
  pointcloud->add_option("--image", cloud_image, "Colour image (PFM, PGM or PPM)")
      ->check(CLI::ExistingFile);
  pointcloud->add_option("--intrinsics", cloud_intrinsics,
                         "Intrinsics file (default: the configured scene)")
      ->check(CLI::ExistingFile);

  std::string sim_image;
  auto* simulate = app.add_subcommand("simulate", "Apply the appearance simulator");
  simulate->add_option("--image", sim_image, "Input image (default: the rendered target)")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (render->parsed()) return RunRender(g);
    if (sweep->parsed()) return RunSweepCommand(g, sweep_input, update_range);
    if (refine->parsed()) return RunRefineCommand(g);
    if (eval->parsed()) return RunEval(g, pred, gt);
    if (pointcloud->parsed()) return RunPointcloud(g, cloud_depth, cloud_image, cloud_intrinsics);
    if (simulate->parsed()) return RunSimulate(g, sim_image);
  } catch (const ConfigError& e) {
    std::cerr << "endodepth: config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "endodepth: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "endodepth: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
