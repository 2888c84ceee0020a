#include <benchmark/benchmark.h>

#include <vector>

#include "endodepth/costvolume.h"
#include "endodepth/patchmatch.h"
#include "endodepth/photometric.h"
#include "endodepth/pipeline.h"
#include "endodepth/synth.h"

using namespace endodepth;

namespace {

SceneSpec BenchScene(int width, int height) {
  SceneSpec s;
  s.geometry = GeometryKind::kTwoPlaneStep;
  s.intrinsics = {static_cast<double>(width), static_cast<double>(width), (width - 1) / 2.0,
                  (height - 1) / 2.0, width, height};
  s.texture = TextureKind::kValueNoise;
  s.texture_scale_mm = 20.0;
  s.camera_to_world = {RigidTransform::Identity(),
                       RigidTransform::FromTranslation(Vec3(-3.5, 0, 0)),
                       RigidTransform::FromTranslation(Vec3(3.5, 0, 0))};
  return s;
}

void BM_CostVolume(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const SceneSpec spec = BenchScene(n, n * 3 / 4);
  const std::vector<RenderedView> views = Render(spec);
  SweepConfig sweep;
  sweep.planes = 32;
  const DepthRangeState range{50.0, 150.0, 0.99};
  for (auto _ : state) {
    SweepRun run = RunSweep(views, spec.intrinsics, sweep, range);
    benchmark::DoNotOptimize(run.depth.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * (n * 3 / 4) * sweep.planes);
}
BENCHMARK(BM_CostVolume)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_PatchLossGradient(benchmark::State& state) {
  const SceneSpec spec = BenchScene(64, 64);
  const std::vector<RenderedView> views = Render(spec);
  SceneInputs in;
  in.target = views[0].image;
  SetSourcesFromViews(views, in);
  KeypointConfig kc;
  kc.threshold_factor = 0.5;
  const KeypointSet kps = DetectKeypoints(in.target, kc);
  const std::vector<SupportDomain> domains = BuildSupportDomains(in.target, kps, PatchmatchConfig{});
  const DepthMap depth(64, 64, 80.0);
  for (auto _ : state) {
    PatchLossGradient g = PatchPhotometricLossGradient(in.target, in.sources, in.poses, depth,
                                                       domains, spec.intrinsics,
                                                       PhotometricConfig{}, 1e-3);
    benchmark::DoNotOptimize(g.gradient.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(domains.size()));
}
BENCHMARK(BM_PatchLossGradient)->Unit(benchmark::kMicrosecond);

void BM_SsimMap(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<RenderedView> views = Render(BenchScene(n, n));
  for (auto _ : state) {
    LossMap m = SsimMap(views[0].image, views[1].image, PhotometricConfig{});
    benchmark::DoNotOptimize(m.values.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_SsimMap)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
