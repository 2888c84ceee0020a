#ifndef ENDODEPTH_GEOMETRY_H_
#define ENDODEPTH_GEOMETRY_H_

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "endodepth/grid.h"

namespace endodepth {

// Pinhole camera. Lens distortion is not modelled.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws std::invalid_argument when fx/fy are not positive or the principal
  // point lies outside [0,width) x [0,height).
  void Validate() const;
  Mat3 Matrix() const;
  Mat3 InverseMatrix() const;
};

// Rigid motion x -> R x + t; translation in millimetres.
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform Identity() { return {}; }
  static RigidTransform FromTranslation(const Vec3& t);
  // Rotation from an axis-angle vector (radians * unit axis).
  static RigidTransform FromAxisAngle(const Vec3& axis_angle, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 Apply(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 operator*(const Vec3& x) const { return Apply(x); }
  // (a * b)(x) = a(b(x)).
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform Inverse() const;
  Eigen::Matrix4d Matrix() const;

  bool IsIdentity() const;
  // Checks orthonormality and det = +1 within `tolerance`.
  void Validate(double tolerance = 1e-9) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  // z of the transformed point; <= 0 means the point is behind the camera and
  // `pixel` must not be used.
  double depth = 0.0;
  bool in_front = false;
};

struct ProjectionWithDerivative {
  Projection projection;
  // d pixel / d depth of the back-projected point.
  Vec2 d_pixel_d_depth = Vec2::Zero();
};

// Back-projects `p` at `depth` with K, moves it by M and projects it again.
// Throws on non-finite input or non-positive depth.
Projection Project(const Vec2& p, double depth, const Intrinsics& K,
                   const RigidTransform& M);
ProjectionWithDerivative ProjectWithDerivative(const Vec2& p, double depth,
                                               const Intrinsics& K,
                                               const RigidTransform& M);

// ((px - cx) / fx * d, (py - cy) / fy * d, d). Throws for depth <= 0.
Vec3 BackProject(const Vec2& p, double depth, const Intrinsics& K);

// Four-neighbour interpolation footprint. Coordinates outside
// [0,W-1] x [0,H-1] are clamped to the border and reported out of bounds.
// Coordinates within kNodeSnap of a grid node are snapped onto it.
struct BilinearStencil {
  std::array<int, 2> x = {0, 0};
  std::array<int, 2> y = {0, 0};
  double fx = 0.0;  // fractional offset from x[0]
  double fy = 0.0;
  bool in_bounds = false;
  // Distance of the unclamped coordinate to the nearest integer node line in
  // each axis; derivative kinks live on those lines.
  double kink_distance_x = 0.0;
  double kink_distance_y = 0.0;
  bool clamped_x = false;
  bool clamped_y = false;

  static constexpr double kNodeSnap = 1e-9;

  double w00() const { return (1.0 - fx) * (1.0 - fy); }
  double w10() const { return fx * (1.0 - fy); }
  double w01() const { return (1.0 - fx) * fy; }
  double w11() const { return fx * fy; }
};

BilinearStencil MakeStencil(int width, int height, const Vec2& q);

// Writes one interpolated value per channel into `out`; returns the
// in-bounds flag.
bool SampleBilinear(const Grid& grid, const Vec2& q, std::span<double> out);
double SampleBilinear(const Grid& grid, const Vec2& q, int channel,
                      bool* in_bounds = nullptr);

// Value plus the spatial derivative of the interpolant. Derivatives along a
// clamped axis are zero.
struct BilinearSampleWithGradient {
  double value = 0.0;
  double d_dx = 0.0;
  double d_dy = 0.0;
};
BilinearSampleWithGradient SampleBilinearWithGradient(
    const Grid& grid, const BilinearStencil& stencil, int channel);

struct WarpResult {
  Grid values;
  ValidityMask mask;
};

// Inverse warp of any grid (image, feature map) into the target view using
// the target depth: out(p) = src<project(p, D(p))>. The mask is false where
// the projection left the source image or went behind the camera.
WarpResult WarpToTarget(const DepthMap& target_depth, const Grid& source,
                        const Intrinsics& K, const RigidTransform& M);

struct SynthesizedView {
  ImageBuffer image;
  ValidityMask mask;
};

SynthesizedView SynthesizeView(const DepthMap& target_depth,
                               const ImageBuffer& source, const Intrinsics& K,
                               const RigidTransform& M);

struct PointCloud {
  std::vector<Vec3> points;
  // Empty, or one RGB triple in [0,1] per point.
  std::vector<Vec3> colors;
};

// One point per pixel, row-major.
PointCloud DepthToPointCloud(const DepthMap& depth, const Intrinsics& K,
                             const std::optional<ImageBuffer>& color = {});

}  // namespace endodepth

#endif  // ENDODEPTH_GEOMETRY_H_
