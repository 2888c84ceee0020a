#include "endodepth/costvolume.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace endodepth {
namespace {

FeatureMap Patch3(const ImageBuffer& image, bool normalize) {
  const int w = image.width(), h = image.height(), ch = image.channels();
  const int len = 9 * ch;
  FeatureMap out(w, h, len);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto f = out.pixel(x, y);
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          for (int c = 0; c < ch; ++c) f[k++] = image.at(xx, yy, c);
        }
      }
      if (!normalize) continue;
      double mean = 0.0;
      for (double v : f) mean += v;
      mean /= len;
      double norm2 = 0.0;
      for (double& v : f) {
        v -= mean;
        norm2 += v * v;
      }
      // Flat patches carry no structure; give them a zero descriptor.
      const double scale = norm2 > 1e-12 ? std::sqrt(len / norm2) : 0.0;
      for (double& v : f) v *= scale;
    }
  }
  return out;
}

}  // namespace

DescriptorKind ParseDescriptorKind(std::string_view name) {
  if (name == "intensity") return DescriptorKind::kIntensity;
  if (name == "grad") return DescriptorKind::kGrad;
  if (name == "patch3") return DescriptorKind::kPatch3;
  if (name == "patch3n") return DescriptorKind::kPatch3Normalized;
  throw std::invalid_argument("unknown descriptor kind '" + std::string(name) +
                              "' (expected intensity, grad, patch3, patch3n)");
}

std::string_view DescriptorKindName(DescriptorKind kind) {
  switch (kind) {
    case DescriptorKind::kIntensity: return "intensity";
    case DescriptorKind::kGrad: return "grad";
    case DescriptorKind::kPatch3: return "patch3";
    case DescriptorKind::kPatch3Normalized: return "patch3n";
  }
  return "unknown";
}

FeatureMap ExtractFeatures(const ImageBuffer& image, DescriptorKind kind) {
  const int w = image.width(), h = image.height(), ch = image.channels();
  switch (kind) {
    case DescriptorKind::kIntensity:
      return FeatureMap(w, h, ch, image.values());
    case DescriptorKind::kGrad: {
      const ImageBuffer gray = image.ToGray();
      FeatureMap out(w, h, ch + 2);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < ch; ++c) out.at(x, y, c) = image.at(x, y, c);
          out.at(x, y, ch) = 0.5 * (gray.at(std::min(x + 1, w - 1), y) -
                                    gray.at(std::max(x - 1, 0), y));
          out.at(x, y, ch + 1) = 0.5 * (gray.at(x, std::min(y + 1, h - 1)) -
                                        gray.at(x, std::max(y - 1, 0)));
        }
      }
      return out;
    }
    case DescriptorKind::kPatch3:
      return Patch3(image, false);
    case DescriptorKind::kPatch3Normalized:
      return Patch3(image, true);
  }
  throw std::invalid_argument("unhandled descriptor kind");
}

void SweepConfig::Validate() const {
  if (planes < 2) throw std::invalid_argument("cost volume needs >= 2 planes");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("soft-argmin temperature must be positive");
  }
}

void DepthRangeState::Validate() const {
  if (!(min_mm > 0.0) || !(min_mm < max_mm) || !std::isfinite(max_mm)) {
    throw std::invalid_argument("depth range must satisfy 0 < min < max, got (" +
                                std::to_string(min_mm) + ", " +
                                std::to_string(max_mm) + ")");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("depth range momentum must lie in [0,1)");
  }
}

std::vector<double> PlaneDepths(const DepthRangeState& state, int plane_count) {
  state.Validate();
  if (plane_count < 2) {
    throw std::invalid_argument("plane sweep needs at least two planes");
  }
  std::vector<double> depths(plane_count);
  const double step = (state.max_mm - state.min_mm) / (plane_count - 1);
  for (int i = 0; i < plane_count; ++i) depths[i] = state.min_mm + i * step;
  depths.back() = state.max_mm;
  return depths;
}

DepthRangeState UpdateDepthRange(const DepthRangeState& state,
                                 std::span<const DepthMap> batch) {
  state.Validate();
  if (batch.empty()) {
    throw std::invalid_argument("depth range update needs a non-empty batch");
  }
  double mean_min = 0.0;
  double mean_max = 0.0;
  for (const DepthMap& d : batch) {
    mean_min += d.Min();
    mean_max += d.Max();
  }
  mean_min /= static_cast<double>(batch.size());
  mean_max /= static_cast<double>(batch.size());

  DepthRangeState next = state;
  next.min_mm = state.momentum * state.min_mm + (1.0 - state.momentum) * mean_min;
  next.max_mm = state.momentum * state.max_mm + (1.0 - state.momentum) * mean_max;
  if (!(next.min_mm > 0.0 && next.min_mm < next.max_mm)) {
    throw std::domain_error(
        "depth range update collapsed: batch min/max (" +
        std::to_string(mean_min) + ", " + std::to_string(mean_max) +
        ") moved the range to (" + std::to_string(next.min_mm) + ", " +
        std::to_string(next.max_mm) + ")");
  }
  return next;
}

CostVolume::CostVolume(std::vector<double> plane_depths, int width, int height)
    : plane_depths_(std::move(plane_depths)), width_(width), height_(height) {
  for (std::size_t i = 1; i < plane_depths_.size(); ++i) {
    if (!(plane_depths_[i] > plane_depths_[i - 1])) {
      throw std::invalid_argument("plane depths must be strictly increasing");
    }
  }
  const std::size_t n = plane_depths_.size() * width * height;
  costs_.assign(n, 0.0);
  valid_.assign(n, 0);
}

std::vector<int> CostVolume::HardArgmin() const {
  std::vector<int> best(static_cast<std::size_t>(width_) * height_, -1);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      double best_cost = std::numeric_limits<double>::infinity();
      int& b = best[static_cast<std::size_t>(y) * width_ + x];
      for (int p = 0; p < plane_count(); ++p) {
        if (valid(p, x, y) && cost(p, x, y) < best_cost) {
          best_cost = cost(p, x, y);
          b = p;
        }
      }
    }
  }
  return best;
}

CostVolume BuildCostVolume(const FeatureMap& target,
                           std::span<const FeatureMap> sources,
                           std::span<const RigidTransform> poses,
                           const Intrinsics& K, const DepthRangeState& state,
                           int plane_count) {
  if (sources.empty()) {
    throw std::invalid_argument("cost volume needs at least one source frame");
  }
  if (sources.size() != poses.size()) {
    throw std::invalid_argument("cost volume: one pose per source required");
  }
  for (const FeatureMap& s : sources) {
    if (!s.SameShape(target)) {
      throw std::invalid_argument("cost volume: feature map shapes differ");
    }
  }
  const int w = target.width(), h = target.height();
  const int len = target.descriptor_length();
  CostVolume volume(PlaneDepths(state, plane_count), w, h);
  std::vector<double> sample(len);
  for (int p = 0; p < plane_count; ++p) {
    const double depth = volume.plane_depths()[p];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto ft = target.pixel(x, y);
        double sum = 0.0;
        int n_valid = 0;
        for (std::size_t s = 0; s < sources.size(); ++s) {
          const Projection proj = Project(Vec2(x, y), depth, K, poses[s]);
          if (!proj.in_front) continue;
          if (!SampleBilinear(sources[s], proj.pixel, sample)) continue;
          double l1 = 0.0;
          for (int k = 0; k < len; ++k) l1 += std::abs(ft[k] - sample[k]);
          sum += l1 / len;
          ++n_valid;
        }
        volume.Set(p, x, y, n_valid > 0 ? sum / n_valid : 0.0, n_valid > 0);
      }
    }
  }
  return volume;
}

DepthMap SoftArgminDepth(const CostVolume& volume, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("soft-argmin temperature must be positive");
  }
  const auto& planes = volume.plane_depths();
  const double mid = 0.5 * (planes.front() + planes.back());
  DepthMap out(volume.width(), volume.height(), mid);
  for (int y = 0; y < volume.height(); ++y) {
    for (int x = 0; x < volume.width(); ++x) {
      double min_cost = std::numeric_limits<double>::infinity();
      for (int p = 0; p < volume.plane_count(); ++p) {
        if (volume.valid(p, x, y)) min_cost = std::min(min_cost, volume.cost(p, x, y));
      }
      if (!std::isfinite(min_cost)) continue;
      double wsum = 0.0;
      double dsum = 0.0;
      for (int p = 0; p < volume.plane_count(); ++p) {
        if (!volume.valid(p, x, y)) continue;
        const double wgt = std::exp(-(volume.cost(p, x, y) - min_cost) / temperature);
        wsum += wgt;
        dsum += wgt * planes[p];
      }
      // Guard against rounding just outside the swept range.
      out(x, y) = std::clamp(dsum / wsum, planes.front(), planes.back());
    }
  }
  return out;
}

}  // namespace endodepth
