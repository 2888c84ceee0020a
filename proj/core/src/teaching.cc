#include "endodepth/teaching.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "endodepth/random.h"

namespace endodepth {
namespace {

void CheckPair(const DepthMap& a, const DepthMap& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument(std::string(what) + ": depth shapes differ");
  }
  // DepthMap guarantees positivity on construction, but the buffers are
  // mutable; re-check before dividing.
  a.Validate();
  b.Validate();
}

ConsistencyLoss NormalizedDifference(const DepthMap& a, const DepthMap& b,
                                     const ValidityMask* mask, double eps,
                                     Operand blocked) {
  ConsistencyLoss out;
  out.tag.blocked = blocked;
  out.map = LossMap(a.width(), a.height(), 0.0, false);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    const double da = a.values()[i], db = b.values()[i];
    const double v = std::abs(da - db) / (da + db + eps);
    out.map.values[i] = v;
    out.map.mask.Set(i, true);
    sum += v;
    ++out.evaluated;
  }
  if (out.evaluated > 0) out.value = sum / static_cast<double>(out.evaluated);
  return out;
}

ConsistencyGradient NormalizedDifferenceGradient(const DepthMap& a,
                                                 const DepthMap& b,
                                                 const ValidityMask* mask,
                                                 double eps, Operand blocked,
                                                 double kink_step) {
  const int w = a.width(), h = a.height();
  ConsistencyGradient out{GradientField(w, h), GradientField(w, h)};
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (mask == nullptr || (*mask)[i]) ++n;
  }
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  GradientField& live = blocked == Operand::kFirst ? out.wrt_second : out.wrt_first;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    const double da = a.values()[i], db = b.values()[i];
    const double sum = da + db + eps;
    const double diff = da - db;
    const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    const double ratio = std::abs(diff) / (sum * sum);
    // d/da = s/sum - |diff|/sum^2, d/db = -s/sum - |diff|/sum^2.
    const double g = blocked == Operand::kFirst ? (-s / sum - ratio)
                                                : (s / sum - ratio);
    live.values[i] = g * inv_n;
    if (kink_step > 0.0 && std::abs(diff) <= kink_step) live.MarkKink(i);
  }
  return out;
}

double Clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::array<double, 3> RgbToHsl(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double l = 0.5 * (mx + mn);
  if (mx == mn) return {0.0, 0.0, l};
  const double d = mx - mn;
  const double s = l > 0.5 ? d / (2.0 - mx - mn) : d / (mx + mn);
  double hue;
  if (mx == r) {
    hue = (g - b) / d + (g < b ? 6.0 : 0.0);
  } else if (mx == g) {
    hue = (b - r) / d + 2.0;
  } else {
    hue = (r - g) / d + 4.0;
  }
  return {hue / 6.0, s, l};
}

double HueToChannel(double p, double q, double t) {
  if (t < 0.0) t += 1.0;
  if (t > 1.0) t -= 1.0;
  if (t < 1.0 / 6.0) return p + (q - p) * 6.0 * t;
  if (t < 0.5) return q;
  if (t < 2.0 / 3.0) return p + (q - p) * (2.0 / 3.0 - t) * 6.0;
  return p;
}

std::array<double, 3> HslToRgb(double h, double s, double l) {
  if (s == 0.0) return {l, l, l};
  const double q = l < 0.5 ? l * (1.0 + s) : l + s - l * s;
  const double p = 2.0 * l - q;
  return {HueToChannel(p, q, h + 1.0 / 3.0), HueToChannel(p, q, h),
          HueToChannel(p, q, h - 1.0 / 3.0)};
}

}  // namespace

ConsistencyLoss CrossTeachingLoss(const DepthMap& student,
                                  const DepthMap& teacher, double eps) {
  CheckPair(student, teacher, "cross-teaching");
  return NormalizedDifference(student, teacher, nullptr, eps, Operand::kSecond);
}

ConsistencyGradient CrossTeachingGradient(const DepthMap& student,
                                          const DepthMap& teacher, double eps,
                                          double kink_step) {
  CheckPair(student, teacher, "cross-teaching");
  return NormalizedDifferenceGradient(student, teacher, nullptr, eps,
                                      Operand::kSecond, kink_step);
}

ConsistencyLoss SelfTeachingLoss(const DepthMap& original,
                                 const DepthMap& transformed,
                                 const OcclusionMask& unoccluded, double eps) {
  CheckPair(original, transformed, "self-teaching");
  if (!unoccluded.SameShape(original)) {
    throw std::invalid_argument("self-teaching: occlusion mask shape differs");
  }
  return NormalizedDifference(original, transformed, &unoccluded, eps,
                              Operand::kFirst);
}

ConsistencyGradient SelfTeachingGradient(const DepthMap& original,
                                         const DepthMap& transformed,
                                         const OcclusionMask& unoccluded,
                                         double eps, double kink_step) {
  CheckPair(original, transformed, "self-teaching");
  if (!unoccluded.SameShape(original)) {
    throw std::invalid_argument("self-teaching: occlusion mask shape differs");
  }
  return NormalizedDifferenceGradient(original, transformed, &unoccluded, eps,
                                      Operand::kFirst, kink_step);
}

void AppearanceSimConfig::Validate() const {
  if (!(gamma_lo > 0.0) || gamma_lo > gamma_hi) {
    throw std::invalid_argument("simulator gamma range must satisfy 0 < lo <= hi");
  }
  if (brightness < 0.0 || hue < 0.0) {
    throw std::invalid_argument("simulator brightness/hue spreads must be >= 0");
  }
  if (!(contrast_lo > 0.0) || contrast_lo > contrast_hi || saturation_lo < 0.0 ||
      saturation_lo > saturation_hi) {
    throw std::invalid_argument("simulator contrast/saturation ranges invalid");
  }
  if (mask_count_lo < 0 || mask_count_lo > mask_count_hi) {
    throw std::invalid_argument("simulator mask count range invalid");
  }
  if (mask_count_hi > 0 && (mask_size_lo < 1 || mask_size_lo > mask_size_hi)) {
    throw std::invalid_argument("simulator mask sizes must be positive, lo <= hi");
  }
  if (!(mask_fill >= 0.0 && mask_fill <= 1.0)) {
    throw std::invalid_argument("simulator mask fill must lie in [0,1]");
  }
}

AppearanceSimConfig AppearanceSimConfig::Identity() {
  AppearanceSimConfig cfg;
  cfg.gamma_lo = cfg.gamma_hi = 1.0;
  cfg.brightness = 0.0;
  cfg.contrast_lo = cfg.contrast_hi = 1.0;
  cfg.saturation_lo = cfg.saturation_hi = 1.0;
  cfg.hue = 0.0;
  cfg.mask_count_lo = cfg.mask_count_hi = 0;
  return cfg;
}

AppearanceParams SampleAppearanceParams(const AppearanceSimConfig& cfg,
                                        int width, int height) {
  cfg.Validate();
  Rng rng(cfg.seed);
  AppearanceParams p;
  p.gamma = UniformReal(rng, cfg.gamma_lo, cfg.gamma_hi);
  p.jitter.brightness = UniformReal(rng, -cfg.brightness, cfg.brightness);
  p.jitter.contrast = UniformReal(rng, cfg.contrast_lo, cfg.contrast_hi);
  p.jitter.saturation = UniformReal(rng, cfg.saturation_lo, cfg.saturation_hi);
  p.jitter.hue = UniformReal(rng, -cfg.hue, cfg.hue);
  const int count = UniformInt(rng, cfg.mask_count_lo, cfg.mask_count_hi);
  for (int i = 0; i < count; ++i) {
    CropRect r;
    r.width = std::min(UniformInt(rng, cfg.mask_size_lo, cfg.mask_size_hi), width);
    r.height = std::min(UniformInt(rng, cfg.mask_size_lo, cfg.mask_size_hi), height);
    r.x = UniformInt(rng, 0, width - r.width);
    r.y = UniformInt(rng, 0, height - r.height);
    p.crops.push_back(r);
  }
  return p;
}

ImageBuffer GammaCorrect(const ImageBuffer& image, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (gamma == 1.0) return image;
  std::vector<double> v(image.values());
  for (double& x : v) x = Clamp01(std::pow(x, gamma));
  return ImageBuffer(image.width(), image.height(), image.channels(), std::move(v));
}

ImageBuffer ColorJitter(const ImageBuffer& image, const ColorJitterParams& p) {
  const int w = image.width(), h = image.height(), ch = image.channels();
  std::vector<double> v(image.values());
  const std::size_t n = image.pixel_count();
  if (p.brightness != 0.0) {
    for (double& x : v) x = Clamp01(x + p.brightness);
  }
  if (p.contrast != 1.0) {
    for (int c = 0; c < ch; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += v[i * ch + c];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double& x = v[i * ch + c];
        x = Clamp01(mean + p.contrast * (x - mean));
      }
    }
  }
  if (ch == 3 && (p.saturation != 1.0 || p.hue != 0.0)) {
    for (std::size_t i = 0; i < n; ++i) {
      double* px = &v[i * 3];
      auto [hue, sat, light] = RgbToHsl(px[0], px[1], px[2]);
      if (sat == 0.0) continue;  // achromatic pixels have no hue to move
      sat = Clamp01(sat * p.saturation);
      hue = hue + p.hue;
      hue -= std::floor(hue);
      const auto rgb = HslToRgb(hue, sat, light);
      for (int c = 0; c < 3; ++c) px[c] = Clamp01(rgb[c]);
    }
  }
  return ImageBuffer(w, h, ch, std::move(v));
}

SimulatedAppearance ApplyAppearance(const ImageBuffer& image,
                                    const AppearanceParams& params,
                                    double fill) {
  ImageBuffer out = ColorJitter(GammaCorrect(image, params.gamma), params.jitter);
  OcclusionMask mask(image.width(), image.height(), true);
  for (const CropRect& r : params.crops) {
    for (int y = std::max(r.y, 0); y < std::min(r.y + r.height, image.height()); ++y) {
      for (int x = std::max(r.x, 0); x < std::min(r.x + r.width, image.width()); ++x) {
        for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = fill;
        mask.Set(x, y, false);
      }
    }
  }
  return {std::move(out), std::move(mask), params};
}

SimulatedAppearance ApplyAppearanceSimulator(const ImageBuffer& image,
                                             const AppearanceSimConfig& cfg) {
  return ApplyAppearance(image, SampleAppearanceParams(cfg, image.width(), image.height()),
                         cfg.mask_fill);
}

}  // namespace endodepth
