#ifndef ENDODEPTH_TEACHING_H_
#define ENDODEPTH_TEACHING_H_

#include <cstdint>
#include <vector>

#include "endodepth/grid.h"
#include "endodepth/photometric.h"

namespace endodepth {

// true = unoccluded.
using OcclusionMask = ValidityMask;

enum class Operand { kFirst, kSecond };

// Marks the operand of a consistency loss that is a constant for
// differentiation.
struct StopGradientTag {
  Operand blocked = Operand::kSecond;
};

inline constexpr double kConsistencyEps = 1e-7;

struct ConsistencyLoss {
  double value = 0.0;
  LossMap map;  // |a - b| / (a + b + eps), masked where not evaluated
  std::size_t evaluated = 0;
  StopGradientTag tag;
};

struct ConsistencyGradient {
  GradientField wrt_first;
  GradientField wrt_second;  // the blocked side is identically zero
};

// Mean of |D - D_hat| / (D + D_hat + eps). The teacher (second operand) is
// blocked.
ConsistencyLoss CrossTeachingLoss(const DepthMap& student,
                                  const DepthMap& teacher,
                                  double eps = kConsistencyEps);
ConsistencyGradient CrossTeachingGradient(const DepthMap& student,
                                          const DepthMap& teacher, double eps,
                                          double kink_step);

// Mean over unoccluded pixels of |D - D_bar| / (D + D_bar + eps); 0 when R is
// empty. The original-frame depth (first operand) is blocked.
ConsistencyLoss SelfTeachingLoss(const DepthMap& original,
                                 const DepthMap& transformed,
                                 const OcclusionMask& unoccluded,
                                 double eps = kConsistencyEps);
ConsistencyGradient SelfTeachingGradient(const DepthMap& original,
                                         const DepthMap& transformed,
                                         const OcclusionMask& unoccluded,
                                         double eps, double kink_step);

struct ColorJitterParams {
  double brightness = 0.0;  // additive
  double contrast = 1.0;    // scale about the channel mean
  double saturation = 1.0;  // HSL saturation scale
  double hue = 0.0;         // HSL hue shift in turns
};

struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct AppearanceSimConfig {
  double gamma_lo = 0.5;
  double gamma_hi = 2.0;
  double brightness = 0.2;  // drawn from [-b, b]
  double contrast_lo = 0.8;
  double contrast_hi = 1.25;
  double saturation_lo = 0.8;
  double saturation_hi = 1.2;
  double hue = 0.05;  // drawn from [-h, h] turns
  int mask_count_lo = 1;
  int mask_count_hi = 3;
  int mask_size_lo = 8;
  int mask_size_hi = 32;
  double mask_fill = 0.0;
  std::uint64_t seed = 0;

  void Validate() const;
  // gamma 1, no jitter, no masks.
  static AppearanceSimConfig Identity();
};

struct AppearanceParams {
  double gamma = 1.0;
  ColorJitterParams jitter;
  std::vector<CropRect> crops;
};

// Draw order from mt19937_64(seed): gamma, brightness, contrast, saturation,
// hue, crop count, then width, height, x, y for each crop. Crop sizes are
// capped at the image size.
AppearanceParams SampleAppearanceParams(const AppearanceSimConfig& cfg,
                                        int width, int height);

ImageBuffer GammaCorrect(const ImageBuffer& image, double gamma);
ImageBuffer ColorJitter(const ImageBuffer& image, const ColorJitterParams& p);

struct SimulatedAppearance {
  ImageBuffer image;
  OcclusionMask unoccluded;
  AppearanceParams params;
};

// gamma -> color jitter -> masking. Crops are filled with `fill` and are
// false in the returned mask.
SimulatedAppearance ApplyAppearance(const ImageBuffer& image,
                                    const AppearanceParams& params,
                                    double fill = 0.0);
SimulatedAppearance ApplyAppearanceSimulator(const ImageBuffer& image,
                                             const AppearanceSimConfig& cfg);

}  // namespace endodepth

#endif  // ENDODEPTH_TEACHING_H_
