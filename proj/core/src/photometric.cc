#include "endodepth/photometric.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace endodepth {
namespace {

void CheckSameShape(const Grid& a, const Grid& b, const char* what) {
  if (!a.SameShape(b)) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ (" +
                                std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + "x" +
                                std::to_string(a.channels()) + " vs " +
                                std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + "x" +
                                std::to_string(b.channels()) + ")");
  }
}

SsimMoments MomentsOf(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  SsimMoments m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.mean_a += a[i];
    m.mean_b += b[i];
  }
  m.mean_a /= n;
  m.mean_b /= n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - m.mean_a;
    const double db = b[i] - m.mean_b;
    m.var_a += da * da;
    m.var_b += db * db;
    m.cov_ab += da * db;
  }
  m.var_a /= n;
  m.var_b /= n;
  m.cov_ab /= n;
  return m;
}

// Forward-difference image edge weights exp(-mean_c |dI|).
void EdgeWeights(const ImageBuffer& image, std::vector<double>& wx,
                 std::vector<double>& wy) {
  const int w = image.width(), h = image.height(), ch = image.channels();
  wx.assign(static_cast<std::size_t>(w) * h, 0.0);
  wy.assign(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) {
        double g = 0.0;
        for (int c = 0; c < ch; ++c) {
          g += std::abs(image.at(x + 1, y, c) - image.at(x, y, c));
        }
        wx[i] = std::exp(-g / ch);
      }
      if (y + 1 < h) {
        double g = 0.0;
        for (int c = 0; c < ch; ++c) {
          g += std::abs(image.at(x, y + 1, c) - image.at(x, y, c));
        }
        wy[i] = std::exp(-g / ch);
      }
    }
  }
}

}  // namespace

void PhotometricConfig::Validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("photometric.alpha must lie in [0,1]");
  }
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw std::invalid_argument("photometric.ssim_window must be odd and >= 3");
  }
  if (!(c1 > 0.0) || !(c2 > 0.0)) {
    throw std::invalid_argument("SSIM constants must be positive");
  }
}

LossMap::LossMap(int w, int h, double fill, bool valid)
    : width(w), height(h),
      values(static_cast<std::size_t>(w) * h, fill),
      mask(w, h, valid) {}

double LossMap::MaskedMean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) {
      sum += values[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double SsimFromMoments(const SsimMoments& m, double c1, double c2) {
  return ((2.0 * m.mean_a * m.mean_b + c1) * (2.0 * m.cov_ab + c2)) /
         ((m.mean_a * m.mean_a + m.mean_b * m.mean_b + c1) *
          (m.var_a + m.var_b + c2));
}

double SsimOfSamples(std::span<const double> a, std::span<const double> b,
                     double c1, double c2) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("SSIM sample sets must be non-empty and equal");
  }
  return SsimFromMoments(MomentsOf(a, b), c1, c2);
}

void SsimGradientWrtB(std::span<const double> a, std::span<const double> b,
                      double c1, double c2, std::span<double> d_b) {
  const SsimMoments m = MomentsOf(a, b);
  const double n = static_cast<double>(a.size());
  const double num_l = 2.0 * m.mean_a * m.mean_b + c1;
  const double num_c = 2.0 * m.cov_ab + c2;
  const double den_l = m.mean_a * m.mean_a + m.mean_b * m.mean_b + c1;
  const double den_c = m.var_a + m.var_b + c2;
  const double num = num_l * num_c;
  const double den = den_l * den_c;
  for (std::size_t j = 0; j < b.size(); ++j) {
    // d mean_b = 1/n, d var_b = 2 (b_j - mean_b)/n, d cov = (a_j - mean_a)/n.
    const double d_num = (2.0 * m.mean_a / n) * num_c +
                         num_l * (2.0 * (a[j] - m.mean_a) / n);
    const double d_den = (2.0 * m.mean_b / n) * den_c +
                         den_l * (2.0 * (b[j] - m.mean_b) / n);
    d_b[j] = (d_num * den - num * d_den) / (den * den);
  }
}

LossMap SsimMap(const ImageBuffer& a, const ImageBuffer& b,
                const PhotometricConfig& cfg) {
  CheckSameShape(a, b, "ssim");
  cfg.Validate();
  const int w = a.width(), h = a.height(), ch = a.channels();
  const int r = cfg.ssim_window / 2;
  const double n = static_cast<double>(cfg.ssim_window * cfg.ssim_window);
  LossMap out(w, h, 0.0, true);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double total = 0.0;
      for (int c = 0; c < ch; ++c) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            const double va = a.at(xx, yy, c);
            const double vb = b.at(xx, yy, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        SsimMoments m;
        m.mean_a = sa / n;
        m.mean_b = sb / n;
        m.var_a = saa / n - m.mean_a * m.mean_a;
        m.var_b = sbb / n - m.mean_b * m.mean_b;
        m.cov_ab = sab / n - m.mean_a * m.mean_b;
        total += SsimFromMoments(m, cfg.c1, cfg.c2);
      }
      out.at(x, y) = total / ch;
    }
  }
  return out;
}

LossMap PhotometricError(const ImageBuffer& target, const ImageBuffer& warped,
                         const ValidityMask& mask,
                         const PhotometricConfig& cfg) {
  CheckSameShape(target, warped, "photometric error");
  if (!mask.SameShape(target)) {
    throw std::invalid_argument("photometric error: mask shape differs");
  }
  cfg.Validate();
  const int w = target.width(), h = target.height(), ch = target.channels();
  LossMap out(w, h, 0.0, false);
  LossMap ssim;
  if (cfg.alpha > 0.0) ssim = SsimMap(target, warped, cfg);
  const int r = cfg.ssim_window / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool valid = mask(x, y);
      if (valid && cfg.alpha > 0.0) {
        for (int dy = -r; dy <= r && valid; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            if (!mask(std::clamp(x + dx, 0, w - 1), yy)) {
              valid = false;
              break;
            }
          }
        }
      }
      double l1 = 0.0;
      for (int c = 0; c < ch; ++c) {
        l1 += std::abs(target.at(x, y, c) - warped.at(x, y, c));
      }
      l1 /= ch;
      double value = (1.0 - cfg.alpha) * l1;
      if (cfg.alpha > 0.0) value += cfg.alpha * (1.0 - ssim.at(x, y)) / 2.0;
      out.at(x, y) = value;
      out.mask.Set(x, y, valid);
    }
  }
  return out;
}

LossMap MinOverSources(std::span<const LossMap> losses) {
  if (losses.empty()) {
    throw std::invalid_argument("min over sources needs at least one map");
  }
  const int w = losses.front().width, h = losses.front().height;
  for (const LossMap& l : losses) {
    if (l.width != w || l.height != h) {
      throw std::invalid_argument("min over sources: map shapes differ");
    }
  }
  LossMap out(w, h, 0.0, false);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double best = inf;
    for (const LossMap& l : losses) {
      if (l.mask[i]) best = std::min(best, l.values[i]);
    }
    if (best < inf) {
      out.values[i] = best;
      out.mask.Set(i, true);
    }
  }
  return out;
}

double EdgeAwareSmoothness(const DepthMap& depth, const ImageBuffer& image) {
  if (depth.width() != image.width() || depth.height() != image.height()) {
    throw std::invalid_argument("smoothness: depth and image shapes differ");
  }
  return EdgeAwareSmoothnessGradient(depth, image, 0.0).value;
}

SmoothnessGradient EdgeAwareSmoothnessGradient(const DepthMap& depth,
                                               const ImageBuffer& image,
                                               double kink_step) {
  if (depth.width() != image.width() || depth.height() != image.height()) {
    throw std::invalid_argument("smoothness: depth and image shapes differ");
  }
  const int w = depth.width(), h = depth.height();
  const std::size_t n = depth.pixel_count();
  std::vector<double> wx, wy;
  EdgeWeights(image, wx, wy);
  const double mean = depth.Mean();
  const double nx = static_cast<double>(w - 1) * h;
  const double ny = static_cast<double>(h - 1) * w;

  SmoothnessGradient out;
  out.gradient = GradientField(w, h);
  // G = d loss / d normalized depth.
  std::vector<double> g(n, 0.0);
  // Window in which a normalized difference may flip sign.
  const double flip_band = 2.0 * kink_step / mean;
  auto term = [&](std::size_t i0, std::size_t i1, double weight, double count) {
    const double diff = (depth.values()[i1] - depth.values()[i0]) / mean;
    out.value += std::abs(diff) * weight / count;
    const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    g[i1] += s * weight / count;
    g[i0] -= s * weight / count;
    if (kink_step > 0.0 && std::abs(diff) <= flip_band) {
      out.gradient.MarkKink(i0);
      out.gradient.MarkKink(i1);
    }
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) term(i, i + 1, wx[i], nx);
      if (y + 1 < h) term(i, i + w, wy[i], ny);
    }
  }
  // Chain through D* = D / mean(D).
  double g_dot_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) g_dot_d += g[i] * depth.values()[i];
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.gradient.values[i] = g[i] / mean - g_dot_d / (nn * mean * mean);
  }
  return out;
}

}  // namespace endodepth
