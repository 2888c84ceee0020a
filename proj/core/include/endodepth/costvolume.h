#ifndef ENDODEPTH_COSTVOLUME_H_
#define ENDODEPTH_COSTVOLUME_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "endodepth/geometry.h"
#include "endodepth/grid.h"

namespace endodepth {

// Deterministic stand-ins for learned descriptors.
enum class DescriptorKind {
  kIntensity,         // the image channels, l = C
  kGrad,              // channels + central x/y gradient of the gray image
  kPatch3,            // flattened 3x3 neighbourhood, l = 9 C
  kPatch3Normalized,  // kPatch3, zero-mean and scaled to norm sqrt(l)
};

DescriptorKind ParseDescriptorKind(std::string_view name);
std::string_view DescriptorKindName(DescriptorKind kind);

FeatureMap ExtractFeatures(const ImageBuffer& image, DescriptorKind kind);

// Depth extent swept by the cost volume, tracked with an exponential moving
// average of per-batch depth minima and maxima.
struct DepthRangeState {
  double min_mm = 40.0;
  double max_mm = 150.0;
  double momentum = 0.99;

  void Validate() const;
};

// d_i = d_min + i (d_max - d_min) / (P - 1).
std::vector<double> PlaneDepths(const DepthRangeState& state, int plane_count);

// new = momentum * old + (1 - momentum) * batch mean of per-map extrema.
// Throws std::domain_error if the update leaves d_min >= d_max.
DepthRangeState UpdateDepthRange(const DepthRangeState& state,
                                 std::span<const DepthMap> batch);

class CostVolume {
 public:
  CostVolume(std::vector<double> plane_depths, int width, int height);

  int plane_count() const { return static_cast<int>(plane_depths_.size()); }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<double>& plane_depths() const { return plane_depths_; }

  std::size_t Index(int plane, int x, int y) const {
    return (static_cast<std::size_t>(plane) * height_ + y) * width_ + x;
  }
  double cost(int plane, int x, int y) const { return costs_[Index(plane, x, y)]; }
  bool valid(int plane, int x, int y) const {
    return valid_[Index(plane, x, y)] != 0;
  }
  void Set(int plane, int x, int y, double cost, bool valid) {
    costs_[Index(plane, x, y)] = cost;
    valid_[Index(plane, x, y)] = valid ? 1 : 0;
  }

  // Index of the cheapest valid plane per pixel, -1 where no plane is valid.
  std::vector<int> HardArgmin() const;

 private:
  std::vector<double> plane_depths_;
  int width_;
  int height_;
  std::vector<double> costs_;
  std::vector<std::uint8_t> valid_;
};

// Plane-sweep volume: for every plane depth, each source feature map is
// warped into the target view through the fronto-parallel plane and compared
// with the target features by mean-over-descriptor L1. Costs are averaged over
// the sources whose sample landed in view; samples outside the source image
// are left out of the average.
CostVolume BuildCostVolume(const FeatureMap& target,
                           std::span<const FeatureMap> sources,
                           std::span<const RigidTransform> poses,
                           const Intrinsics& K, const DepthRangeState& state,
                           int plane_count);

struct SweepConfig {
  int planes = 32;
  DescriptorKind descriptor = DescriptorKind::kGrad;
  double temperature = 0.002;  // soft-argmin, in cost units

  void Validate() const;
};

// Softmax(-cost / temperature) weighted plane depth per pixel. Pixels with no
// valid plane get the middle of the swept range.
DepthMap SoftArgminDepth(const CostVolume& volume, double temperature);

}  // namespace endodepth

#endif  // ENDODEPTH_COSTVOLUME_H_
