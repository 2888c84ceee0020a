#include "endodepth/metrics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace endodepth {
namespace {

double Median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

MedianScaled MedianScale(const DepthMap& pred, const DepthMap& gt) {
  if (pred.empty() || gt.empty()) {
    throw std::invalid_argument("median scaling needs non-empty depth maps");
  }
  const double mp = Median(pred.values());
  const double mg = Median(gt.values());
  if (!(mp > 0.0) || !(mg > 0.0)) {
    throw std::domain_error("median scaling needs positive medians");
  }
  const double factor = mg / mp;
  std::vector<double> v = pred.values();
  for (double& d : v) d *= factor;
  return {DepthMap(pred.width(), pred.height(), std::move(v)), factor};
}

MetricsReport ComputeMetrics(const DepthMap& pred, const DepthMap& gt,
                             const MetricsConfig& cfg) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw std::invalid_argument("metrics: prediction and ground truth shapes differ");
  }
  if (!(cfg.clip_mm > 0.0)) throw std::invalid_argument("metrics: clip must be > 0");
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
  std::size_t inside = 0, n = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    const double g = gt.values()[i];
    if (cfg.mask_gt_beyond_clip && g > cfg.clip_mm) continue;
    const double d = std::min(pred.values()[i], cfg.clip_mm);
    const double diff = d - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double dl = std::log(d) - std::log(g);
    sq_log += dl * dl;
    if (std::max(d / g, g / d) < 1.25) ++inside;
    ++n;
  }
  if (n == 0) throw std::domain_error("metrics: no pixel left to evaluate");
  const double nn = static_cast<double>(n);
  MetricsReport r;
  r.abs_rel = abs_rel / nn;
  r.sq_rel = sq_rel / nn;
  r.rmse = std::sqrt(sq / nn);
  r.rmse_log = std::sqrt(sq_log / nn);
  r.delta = 100.0 * static_cast<double>(inside) / nn;
  r.n = n;
  return r;
}

}  // namespace endodepth
