#ifndef ENDODEPTH_METRICS_H_
#define ENDODEPTH_METRICS_H_

#include "endodepth/grid.h"

namespace endodepth {

struct MetricsReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;      // mm
  double rmse_log = 0.0;
  double delta = 0.0;     // percentage of pixels with max(d/g, g/d) < 1.25
  std::size_t n = 0;
};

struct MedianScaled {
  DepthMap depth;
  double factor = 1.0;
};

// pred * median(gt) / median(pred). The median of an even count is the mean
// of the two middle values.
MedianScaled MedianScale(const DepthMap& pred, const DepthMap& gt);

struct MetricsConfig {
  double clip_mm = 150.0;
  // Leave ground-truth pixels deeper than clip_mm out of the evaluation.
  bool mask_gt_beyond_clip = true;
};

// Metrics of `pred` (already scaled) against `gt`. Predictions are clipped to
// clip_mm before comparison. Throws std::invalid_argument on shape mismatch
// and std::domain_error when no pixel is left to evaluate.
MetricsReport ComputeMetrics(const DepthMap& pred, const DepthMap& gt,
                             const MetricsConfig& cfg = {});

}  // namespace endodepth

#endif  // ENDODEPTH_METRICS_H_
