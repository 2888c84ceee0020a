#ifndef ENDODEPTH_PHOTOMETRIC_H_
#define ENDODEPTH_PHOTOMETRIC_H_

#include <span>
#include <vector>

#include "endodepth/grid.h"

namespace endodepth {

struct PhotometricConfig {
  double alpha = 0.85;  // weight of the SSIM term
  int ssim_window = 3;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;

  void Validate() const;
};

// Per-pixel values with a validity mask. Reductions only look at pixels whose
// mask is true.
struct LossMap {
  LossMap() = default;
  LossMap(int width, int height, double fill, bool valid);

  int width = 0;
  int height = 0;
  std::vector<double> values;
  ValidityMask mask;

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  // Mean over valid pixels; 0 when nothing is valid.
  double MaskedMean() const;
};

// Structural similarity of two equally sized sample sets using population
// moments: ((2 ua ub + c1)(2 sab + c2)) / ((ua^2 + ub^2 + c1)(sa + sb + c2)).
double SsimOfSamples(std::span<const double> a, std::span<const double> b,
                     double c1, double c2);

// SSIM from a window's moments; exposed so callers can differentiate it.
struct SsimMoments {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov_ab = 0.0;
};
double SsimFromMoments(const SsimMoments& m, double c1, double c2);

// d SSIM / d b_j for every sample of `b`, holding `a` fixed.
void SsimGradientWrtB(std::span<const double> a, std::span<const double> b,
                      double c1, double c2, std::span<double> d_b);

// Box-filtered SSIM averaged over channels, replicate padding at the border.
// The returned mask is all true.
LossMap SsimMap(const ImageBuffer& a, const ImageBuffer& b,
                const PhotometricConfig& cfg);

// alpha * (1 - SSIM) / 2 + (1 - alpha) * mean_c |target - warped|. When
// alpha > 0 a pixel is valid only if its whole SSIM window is valid in
// `mask`.
LossMap PhotometricError(const ImageBuffer& target, const ImageBuffer& warped,
                         const ValidityMask& mask,
                         const PhotometricConfig& cfg);

// Per-pixel minimum across maps; invalid entries count as +inf. The result
// mask is the union of the input masks.
LossMap MinOverSources(std::span<const LossMap> losses);

// Mean of |d(D/mean D)| * exp(-|dI|) over forward differences in x plus the
// same in y. |dI| is averaged over channels.
double EdgeAwareSmoothness(const DepthMap& depth, const ImageBuffer& image);

struct SmoothnessGradient {
  double value = 0.0;
  GradientField gradient;
};
SmoothnessGradient EdgeAwareSmoothnessGradient(const DepthMap& depth,
                                               const ImageBuffer& image,
                                               double kink_step);

}  // namespace endodepth

#endif  // ENDODEPTH_PHOTOMETRIC_H_
