#include "endodepth/pipeline.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "endodepth/random.h"

namespace endodepth {
namespace {

DepthMap NoisyTeacher(const DepthMap& truth, double noise, std::uint64_t seed) {
  Rng rng(seed ^ 0x7EAC4E2ULL);
  DepthMap out = truth;
  for (double& d : out.mutable_data()) d *= 1.0 + UniformReal(rng, -noise, noise);
  return out;
}

}  // namespace

void SetSourcesFromViews(const std::vector<RenderedView>& views, SceneInputs& inputs) {
  inputs.sources.clear();
  inputs.poses.clear();
  for (std::size_t v = 1; v < views.size(); ++v) {
    inputs.sources.push_back(views[v].image);
    inputs.poses.push_back(RelativePose(views[0].camera_to_world, views[v].camera_to_world));
  }
}

SweepRun RunSweep(const std::vector<RenderedView>& views, const Intrinsics& K,
                  const SweepConfig& sweep, const DepthRangeState& range) {
  sweep.Validate();
  if (views.size() < 2) throw std::invalid_argument("sweep needs a target and >= 1 source view");
  const FeatureMap target = ExtractFeatures(views[0].image, sweep.descriptor);
  std::vector<FeatureMap> sources;
  std::vector<RigidTransform> poses;
  for (std::size_t v = 1; v < views.size(); ++v) {
    sources.push_back(ExtractFeatures(views[v].image, sweep.descriptor));
    poses.push_back(RelativePose(views[0].camera_to_world, views[v].camera_to_world));
  }
  CostVolume volume = BuildCostVolume(target, sources, poses, K, range, sweep.planes);
  DepthMap depth = SoftArgminDepth(volume, sweep.temperature);
  return SweepRun{sweep, range, std::move(volume), std::move(depth)};
}

double NearestPlaneFraction(const SweepRun& run, const DepthMap& truth,
                            const ImageBuffer& target) {
  const std::vector<int> best = run.volume.HardArgmin();
  const std::vector<double> grad = GradientMagnitude(target);
  const std::vector<double>& planes = run.volume.plane_depths();
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < best.size(); ++i) {
    if (!(grad[i] > 0.0)) continue;
    ++total;
    if (best[i] < 0) continue;
    const double t = truth.values()[i];
    double nearest = std::abs(planes[0] - t);
    for (double p : planes) nearest = std::min(nearest, std::abs(p - t));
    if (std::abs(planes[best[i]] - t) <= nearest + 1e-9 * t) ++hits;
  }
  if (total == 0) throw std::domain_error("target has no textured pixels");
  return static_cast<double>(hits) / static_cast<double>(total);
}

RefineRun RunRefine(const RunConfig& cfg) {
  RefineRun run;
  run.spec = SceneSpecFromConfig(cfg);
  if (run.spec.camera_to_world.size() < 2) {
    cfg.Reject("scene.sources", "refine needs at least one source view");
  }
  run.views = Render(run.spec);
  const std::uint64_t seed = cfg.GetUint("run.seed");
  run.perturbed = PerturbViews(run.views, PerturbationFromConfig(cfg), seed);

  const RefineConfig refine = RefineFromConfig(cfg);
  const LossWeights weights = LossWeightsFromConfig(cfg);
  const DepthMap& truth = run.views[0].depth;

  // Keypoints and support domains come from the target as the refinement
  // sees it.
  const ImageBuffer& target = run.perturbed.views[0].image;
  run.keypoints = DetectKeypoints(target, KeypointsFromConfig(cfg));
  if (run.keypoints.empty()) throw std::runtime_error("no keypoints detected on the target");
  run.inputs.target = target;
  SetSourcesFromViews(run.perturbed.views, run.inputs);
  run.inputs.intrinsics = run.spec.intrinsics;
  run.inputs.domains = BuildSupportDomains(target, run.keypoints, PatchmatchFromConfig(cfg));
  run.inputs.photometric = PhotometricFromConfig(cfg);

  const std::string& teacher = cfg.GetString("teacher.source");
  if (teacher == "gt_noisy") {
    const double noise = cfg.GetDouble("teacher.noise");
    if (!(noise >= 0.0 && noise < 1.0)) cfg.Reject("teacher.noise", "must lie in [0, 1)");
    run.inputs.teacher = NoisyTeacher(truth, noise, seed);
  } else if (teacher == "sweep") {
    run.inputs.teacher =
        RunSweep(run.perturbed.views, run.spec.intrinsics, SweepFromConfig(cfg),
                 DepthRangeFromConfig(cfg)).depth;
  } else if (teacher != "none") {
    cfg.Reject("teacher.source", "expected none, gt_noisy or sweep, got '" + teacher + "'");
  }

  const std::string& init = cfg.GetString("refine.init");
  if (init == "mean_gt") {
    run.initial = DepthMap(truth.width(), truth.height(), truth.Mean());
  } else if (init == "constant") {
    const double d = cfg.GetDouble("refine.init_depth_mm");
    if (!(d > 0.0)) cfg.Reject("refine.init_depth_mm", "must be > 0");
    run.initial = DepthMap(truth.width(), truth.height(), d);
  } else {
    cfg.Reject("refine.init", "expected mean_gt or constant, got '" + init + "'");
  }

  const bool perturbed = cfg.GetString("perturb.kind") != "none";
  if (perturbed && weights.lambda3 > 0.0) {
    SceneInputs clean = run.inputs;
    clean.target = run.views[0].image;
    SetSourcesFromViews(run.views, clean);
    LossWeights clean_weights = weights;
    clean_weights.lambda3 = 0.0;
    run.reference = RefineDepth(run.initial, clean, refine, clean_weights);
    run.inputs.self_teaching =
        SelfTeachingInputs{run.reference->depth, run.perturbed.unoccluded[0]};
  }

  run.result = RefineDepth(run.initial, run.inputs, refine, weights);
  run.metrics = ComputeMetrics(run.result.depth, truth, MetricsFromConfig(cfg));
  return run;
}

}  // namespace endodepth
