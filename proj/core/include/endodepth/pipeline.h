#ifndef ENDODEPTH_PIPELINE_H_
#define ENDODEPTH_PIPELINE_H_

#include <optional>
#include <vector>

#include "endodepth/config.h"
#include "endodepth/costvolume.h"
#include "endodepth/metrics.h"
#include "endodepth/patchmatch.h"
#include "endodepth/refine.h"
#include "endodepth/synth.h"

namespace endodepth {

// Views 1.. of a render seen from view 0: images and target -> source poses.
void SetSourcesFromViews(const std::vector<RenderedView>& views, SceneInputs& inputs);

struct SweepRun {
  SweepConfig sweep;
  DepthRangeState range;
  CostVolume volume;
  DepthMap depth;  // soft-argmin
};

SweepRun RunSweep(const std::vector<RenderedView>& views, const Intrinsics& K,
                  const SweepConfig& sweep, const DepthRangeState& range);

// Fraction of textured target pixels whose hard argmin is a plane nearest to
// the true depth (ties between equidistant planes both count).
double NearestPlaneFraction(const SweepRun& run, const DepthMap& truth,
                            const ImageBuffer& target);

struct RefineRun {
  SceneSpec spec;
  std::vector<RenderedView> views;  // clean render
  PerturbedViews perturbed;         // what the refinement sees
  KeypointSet keypoints;
  SceneInputs inputs;
  DepthMap initial;
  std::optional<RefineResult> reference;  // clean-frame run for self-teaching
  RefineResult result;
  MetricsReport metrics;  // against the rendered depth, no median scaling
};

// Renders the configured scene, applies the configured perturbation and
// refines from the configured initialisation. A teacher is attached when
// teacher.source is not "none". When a perturbation is active and lambda3 > 0
// the clean frames are refined first (lambda3 = 0) and the result is the
// stop-gradient reference of the self-teaching term.
RefineRun RunRefine(const RunConfig& cfg);

}  // namespace endodepth

#endif  // ENDODEPTH_PIPELINE_H_
