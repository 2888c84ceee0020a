#ifndef ENDODEPTH_PATCHMATCH_H_
#define ENDODEPTH_PATCHMATCH_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "endodepth/costvolume.h"
#include "endodepth/geometry.h"
#include "endodepth/grid.h"
#include "endodepth/photometric.h"

namespace endodepth {

struct Keypoint {
  int x = 0;
  int y = 0;
  double score = 0.0;  // gradient magnitude

  Vec2 position() const { return Vec2(x, y); }
};

struct KeypointSet {
  std::vector<Keypoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct KeypointConfig {
  int target_count = 512;
  int cell = 4;
  // A cell's best pixel is kept if its gradient exceeds factor * median.
  double threshold_factor = 1.5;
  // Absolute floor on the threshold so noise-free flat cells stay empty.
  double min_gradient = 1e-6;
};

// Central-difference gradient magnitude of the gray image, replicate border.
std::vector<double> GradientMagnitude(const ImageBuffer& image);

// Grid-cell gradient maxima with a per-cell median threshold, ranked by score
// (ties by row then column) and truncated to target_count.
KeypointSet DetectKeypoints(const ImageBuffer& image, const KeypointConfig& cfg);

// Self-correlation of each keypoint descriptor with its neighbours in an
// r x r window spanning offsets [-r/2, r/2 - 1] in each axis:
//   c(delta) = <F(p), F(p + delta)> / l.
// Neighbours outside the image read the border-clamped descriptor and are
// flagged.
class CorrelationVolume {
 public:
  CorrelationVolume(int search_range, std::size_t keypoint_count);

  int search_range() const { return range_; }
  int window_size() const { return range_ * range_; }
  std::size_t keypoint_count() const { return values_.size(); }

  Vec2 Offset(int index) const;
  int IndexOf(int dx, int dy) const {
    return (dy + range_ / 2) * range_ + (dx + range_ / 2);
  }

  std::span<const double> values(std::size_t k) const { return values_[k]; }
  std::span<double> mutable_values(std::size_t k) { return values_[k]; }
  bool clamped(std::size_t k, int index) const { return clamped_[k][index] != 0; }
  void set_clamped(std::size_t k, int index, bool v) { clamped_[k][index] = v; }

 private:
  int range_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<std::uint8_t>> clamped_;
};

CorrelationVolume ComputeCorrelationVolume(const FeatureMap& features,
                                           const KeypointSet& keypoints,
                                           int search_range);

// Base offsets o_i plus decoded refinements delta o_i for one keypoint.
struct OffsetField {
  std::vector<Vec2> base;
  std::vector<Vec2> delta;
};

// The 8-neighbour unit ring, counter-clockwise from +x.
std::vector<Vec2> UnitRingBaseGrid();

class OffsetDecoder {
 public:
  virtual ~OffsetDecoder() = default;
  virtual std::vector<OffsetField> Decode(const CorrelationVolume& volume) const = 0;
};

// Delta o = 0 everywhere: plain fixed-pattern patchmatch.
class FixedGridDecoder : public OffsetDecoder {
 public:
  explicit FixedGridDecoder(std::vector<Vec2> base_grid);
  std::vector<OffsetField> Decode(const CorrelationVolume& volume) const override;

 private:
  std::vector<Vec2> base_;
};

// Each window offset other than the centre belongs to the base direction it
// is angularly closest to. For direction i the decoder takes the
// softmax(c / temperature)-weighted mean displacement over its sector and
// emits delta o_i = mean - o_i, shortened to at most max_radius.
class SectorSoftArgmaxDecoder : public OffsetDecoder {
 public:
  SectorSoftArgmaxDecoder(std::vector<Vec2> base_grid, double temperature,
                          double max_radius);
  std::vector<OffsetField> Decode(const CorrelationVolume& volume) const override;

  // Sector index per window entry (-1 for the centre offset).
  std::vector<int> SectorAssignment(int search_range) const;

 private:
  std::vector<Vec2> base_;
  double temperature_;
  double max_radius_;
};

std::vector<OffsetField> DecodeOffsetsSoftArgmax(
    const CorrelationVolume& volume, const std::vector<Vec2>& base_grid,
    double temperature, double max_radius);

enum class DecoderKind { kFixedGrid, kSectorSoftArgmax };

DecoderKind ParseDecoderKind(std::string_view name);  // "fixed" or "softargmax"
std::string_view DecoderKindName(DecoderKind kind);

struct PatchmatchConfig {
  DecoderKind decoder = DecoderKind::kSectorSoftArgmax;
  DescriptorKind descriptor = DescriptorKind::kPatch3Normalized;
  int search_range = 8;
  double temperature = 0.1;
  double max_radius = 0.5;

  void Validate() const;
};

// Decoder over the unit-ring base grid.
std::unique_ptr<OffsetDecoder> MakeDecoder(const PatchmatchConfig& cfg);

struct SupportDomain {
  Vec2 center = Vec2::Zero();
  std::vector<Vec2> offsets;  // o_i + delta o_i
  // Centre first, then one member per offset, clamped into the image.
  std::vector<Vec2> members;
  std::vector<std::uint8_t> clamped;  // per member
  // Some non-centre member coincides with the centre.
  bool degenerate = false;
};

SupportDomain AssembleSupportDomain(const Keypoint& keypoint,
                                    const OffsetField& offsets, int width,
                                    int height);

std::vector<SupportDomain> AssembleSupportDomains(
    const KeypointSet& keypoints, std::span<const OffsetField> offsets,
    int width, int height);

// Descriptor extraction, self-correlation, decoding and assembly on the
// target image.
std::vector<SupportDomain> BuildSupportDomains(const ImageBuffer& target,
                                               const KeypointSet& keypoints,
                                               const PatchmatchConfig& cfg);

// Bilinear depth at every member (centre first).
std::vector<double> SampleDomainDepths(const DepthMap& depth,
                                       const SupportDomain& domain);

// One row per domain: kp_x kp_y then x y for each member after the centre.
void WriteSupportDomainTable(std::ostream& out,
                             std::span<const SupportDomain> domains);

struct PatchLossResult {
  double value = 0.0;              // mean over domains with a valid source
  std::vector<double> per_domain;  // 0 for all-invalid domains
  std::vector<int> chosen_source;  // -1 for all-invalid domains
  std::size_t invalid_domains = 0;
};

// Patch-based photometric loss. The keypoint pixel is projected once per
// member depth, K M D(member) K^-1 p_k; the target intensity at the keypoint
// is compared with the source samples at those projections through the
// weighted SSIM + L1 error, the SSIM window being the member set. Each
// domain keeps the source with the smallest error.
PatchLossResult PatchPhotometricLoss(const ImageBuffer& target,
                                     std::span<const ImageBuffer> sources,
                                     std::span<const RigidTransform> poses,
                                     const DepthMap& depth,
                                     std::span<const SupportDomain> domains,
                                     const Intrinsics& K,
                                     const PhotometricConfig& cfg);

struct PatchLossGradient {
  PatchLossResult loss;
  GradientField gradient;
};

PatchLossGradient PatchPhotometricLossGradient(
    const ImageBuffer& target, std::span<const ImageBuffer> sources,
    std::span<const RigidTransform> poses, const DepthMap& depth,
    std::span<const SupportDomain> domains, const Intrinsics& K,
    const PhotometricConfig& cfg, double kink_step);

}  // namespace endodepth

#endif  // ENDODEPTH_PATCHMATCH_H_
