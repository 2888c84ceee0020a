#ifndef ENDODEPTH_REFINE_H_
#define ENDODEPTH_REFINE_H_

#include <optional>
#include <string_view>
#include <vector>

#include "endodepth/costvolume.h"
#include "endodepth/geometry.h"
#include "endodepth/grid.h"
#include "endodepth/patchmatch.h"
#include "endodepth/photometric.h"
#include "endodepth/teaching.h"

namespace endodepth {

// L = lambda1 L_ph + lambda2 L_ct + lambda3 L_st + lambda4 L_es.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.02;
  double lambda3 = 0.002;
  double lambda4 = 0.0001;

  void Validate() const;
};

enum class GradientMode { kAnalytic, kFiniteDifference };

GradientMode ParseGradientMode(std::string_view name);
std::string_view GradientModeName(GradientMode mode);

struct RefineConfig {
  int levels = 3;
  // Grid spacing shrinks by this factor per level; the finest level is the
  // pixel grid.
  int level_factor = 4;
  // Iterations and descent step per level, coarse to fine. A single entry
  // is used for all levels.
  std::vector<int> iterations = {100, 100, 300};
  std::vector<double> step_sizes = {8.0e5, 4.0e5, 8.0e4};
  GradientMode mode = GradientMode::kAnalytic;
  double fd_step = 1e-3;  // mm
  // Iterates are projected onto [min_mm / 2, 2 max_mm].
  DepthRangeState depth_range;

  void Validate() const;
  double StepSize(int level) const;
  int Iterations(int level) const;
  int TotalIterations() const;
  double LowerBound() const { return 0.5 * depth_range.min_mm; }
  double UpperBound() const { return 2.0 * depth_range.max_mm; }
};

// The depth being optimised plays the role of the transformed-branch depth
// D_bar; `reference` is the stop-gradient original-frame depth D^t.
struct SelfTeachingInputs {
  DepthMap reference;
  OcclusionMask unoccluded;
};

struct SceneInputs {
  ImageBuffer target;
  std::vector<ImageBuffer> sources;
  std::vector<RigidTransform> poses;  // target -> source, one per source
  Intrinsics intrinsics;
  std::vector<SupportDomain> domains;
  PhotometricConfig photometric;
  std::optional<DepthMap> teacher;
  std::optional<SelfTeachingInputs> self_teaching;

  // Checks shapes and counts against a depth map of the target's size.
  void Validate() const;
};

struct LossReport {
  double total = 0.0;
  double ph = 0.0;
  double ct = 0.0;
  double st = 0.0;
  double es = 0.0;
  std::size_t ph_count = 0;  // support domains with a valid source
  std::size_t ct_count = 0;  // pixels compared with the teacher
  std::size_t st_count = 0;  // unoccluded pixels
  std::size_t es_count = 0;  // depth pixels
};

// Absent teacher or self-teaching inputs contribute a zero term.
LossReport TotalLoss(const SceneInputs& scene, const DepthMap& depth,
                     const LossWeights& weights);

// d L / d depth. The per-term fields are unweighted so that
// total = sum lambda_i * term_i. `teacher` and `self_reference` hold the
// gradient with respect to the stop-gradient operands, which is zero by
// contract. In analytic mode a pixel is flagged in `total.kinks` when some
// term is not differentiable within +-fd_step of the current depth.
struct LossGradient {
  LossReport report;
  GradientField total;
  GradientField ph;
  GradientField ct;
  GradientField st;
  GradientField es;
  GradientField teacher;
  GradientField self_reference;
};

LossGradient LossGradientWrtDepth(const SceneInputs& scene,
                                  const DepthMap& depth,
                                  const LossWeights& weights,
                                  GradientMode mode, double fd_step);

struct RefineResult {
  DepthMap depth;
  // One report per evaluated iterate: the initial depth, then after every
  // step.
  std::vector<LossReport> trace;
  std::vector<int> trace_level;
};

// Gradient descent on a coarse-to-fine depth parameterisation. At each level
// the depth is the level's starting depth plus the bilinear upsampling of a
// correction defined on a node grid with the level's spacing.
RefineResult RefineDepth(const DepthMap& initial, const SceneInputs& scene,
                         const RefineConfig& config, const LossWeights& weights);

}  // namespace endodepth

#endif  // ENDODEPTH_REFINE_H_
