#include "endodepth/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace endodepth {
namespace {

bool Finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

// Clamp, snap and split one coordinate axis.
void ResolveAxis(double q, int extent, int& i0, int& i1, double& frac,
                 bool& clamped, bool& in_bounds, double& kink_distance) {
  constexpr double kSnap = BilinearStencil::kNodeSnap;
  const double hi = static_cast<double>(extent - 1);
  if (!std::isfinite(q)) {
    i0 = i1 = 0;
    frac = 0.0;
    clamped = true;
    in_bounds = false;
    kink_distance = 0.0;
    return;
  }
  kink_distance = std::abs(q - std::round(q));
  in_bounds = q >= -kSnap && q <= hi + kSnap;
  double x = q;
  clamped = false;
  if (x < 0.0) {
    x = 0.0;
    clamped = q < -kSnap;
  } else if (x > hi) {
    x = hi;
    clamped = q > hi + kSnap;
  }
  i0 = static_cast<int>(std::floor(x));
  frac = x - i0;
  if (frac < kSnap) {
    frac = 0.0;
  } else if (frac > 1.0 - kSnap) {
    ++i0;
    frac = 0.0;
  }
  if (i0 >= extent - 1) {
    i0 = extent - 1;
    i1 = extent - 1;
    frac = 0.0;
  } else {
    i1 = i0 + 1;
  }
}

}  // namespace

void Intrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("intrinsics: principal point (" +
                                std::to_string(cx) + ", " + std::to_string(cy) +
                                ") outside the image");
  }
}

Mat3 Intrinsics::Matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::InverseMatrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

RigidTransform::RigidTransform()
    : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

RigidTransform RigidTransform::FromTranslation(const Vec3& t) {
  return {Mat3::Identity(), t};
}

RigidTransform RigidTransform::FromAxisAngle(const Vec3& axis_angle,
                                             const Vec3& t) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return {Mat3::Identity(), t};
  return {Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix(), t};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation_ * other.rotation_,
          rotation_ * other.translation_ + translation_};
}

RigidTransform RigidTransform::Inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

Eigen::Matrix4d RigidTransform::Matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

bool RigidTransform::IsIdentity() const {
  return rotation_ == Mat3::Identity() && translation_ == Vec3::Zero();
}

void RigidTransform::Validate(double tolerance) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) {
    throw std::invalid_argument("rigid transform has non-finite entries");
  }
  const double ortho =
      (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tolerance) {
    throw std::invalid_argument("rotation is not orthonormal (|R^T R - I| = " +
                                std::to_string(ortho) + ")");
  }
  if (std::abs(rotation_.determinant() - 1.0) > tolerance) {
    throw std::invalid_argument("rotation determinant is not +1");
  }
}

Vec3 BackProject(const Vec2& p, double depth, const Intrinsics& K) {
  if (!std::isfinite(depth) || depth <= 0.0) {
    throw std::invalid_argument("back-projection needs a positive depth, got " +
                                std::to_string(depth));
  }
  return {(p.x() - K.cx) / K.fx * depth, (p.y() - K.cy) / K.fy * depth, depth};
}

ProjectionWithDerivative ProjectWithDerivative(const Vec2& p, double depth,
                                               const Intrinsics& K,
                                               const RigidTransform& M) {
  if (!Finite(p)) throw std::invalid_argument("projection of a non-finite pixel");
  const Vec3 ray((p.x() - K.cx) / K.fx, (p.y() - K.cy) / K.fy, 1.0);
  const Vec3 y = M.Apply(BackProject(p, depth, K));
  const Vec3 dy = M.rotation() * ray;

  ProjectionWithDerivative out;
  out.projection.depth = y.z();
  out.projection.in_front = y.z() > 0.0;
  if (y.z() == 0.0) {
    const double inf = std::numeric_limits<double>::infinity();
    out.projection.pixel = Vec2(inf, inf);
    return out;
  }
  const double inv_z = 1.0 / y.z();
  out.projection.pixel =
      Vec2(K.fx * y.x() * inv_z + K.cx, K.fy * y.y() * inv_z + K.cy);
  const double inv_z2 = inv_z * inv_z;
  out.d_pixel_d_depth =
      Vec2(K.fx * (dy.x() * y.z() - y.x() * dy.z()) * inv_z2,
           K.fy * (dy.y() * y.z() - y.y() * dy.z()) * inv_z2);
  return out;
}

Projection Project(const Vec2& p, double depth, const Intrinsics& K,
                   const RigidTransform& M) {
  return ProjectWithDerivative(p, depth, K, M).projection;
}

BilinearStencil MakeStencil(int width, int height, const Vec2& q) {
  BilinearStencil s;
  bool in_x = false;
  bool in_y = false;
  ResolveAxis(q.x(), width, s.x[0], s.x[1], s.fx, s.clamped_x, in_x,
              s.kink_distance_x);
  ResolveAxis(q.y(), height, s.y[0], s.y[1], s.fy, s.clamped_y, in_y,
              s.kink_distance_y);
  s.in_bounds = in_x && in_y;
  return s;
}

bool SampleBilinear(const Grid& grid, const Vec2& q, std::span<double> out) {
  const BilinearStencil s = MakeStencil(grid.width(), grid.height(), q);
  const double w00 = s.w00(), w10 = s.w10(), w01 = s.w01(), w11 = s.w11();
  for (int c = 0; c < grid.channels(); ++c) {
    out[c] = w00 * grid.at(s.x[0], s.y[0], c) + w10 * grid.at(s.x[1], s.y[0], c) +
             w01 * grid.at(s.x[0], s.y[1], c) + w11 * grid.at(s.x[1], s.y[1], c);
  }
  return s.in_bounds;
}

double SampleBilinear(const Grid& grid, const Vec2& q, int channel,
                      bool* in_bounds) {
  const BilinearStencil s = MakeStencil(grid.width(), grid.height(), q);
  if (in_bounds != nullptr) *in_bounds = s.in_bounds;
  return s.w00() * grid.at(s.x[0], s.y[0], channel) +
         s.w10() * grid.at(s.x[1], s.y[0], channel) +
         s.w01() * grid.at(s.x[0], s.y[1], channel) +
         s.w11() * grid.at(s.x[1], s.y[1], channel);
}

BilinearSampleWithGradient SampleBilinearWithGradient(
    const Grid& grid, const BilinearStencil& s, int channel) {
  const double v00 = grid.at(s.x[0], s.y[0], channel);
  const double v10 = grid.at(s.x[1], s.y[0], channel);
  const double v01 = grid.at(s.x[0], s.y[1], channel);
  const double v11 = grid.at(s.x[1], s.y[1], channel);
  BilinearSampleWithGradient out;
  out.value = s.w00() * v00 + s.w10() * v10 + s.w01() * v01 + s.w11() * v11;
  if (!s.clamped_x && s.x[1] != s.x[0]) {
    out.d_dx = (1.0 - s.fy) * (v10 - v00) + s.fy * (v11 - v01);
  }
  if (!s.clamped_y && s.y[1] != s.y[0]) {
    out.d_dy = (1.0 - s.fx) * (v01 - v00) + s.fx * (v11 - v10);
  }
  return out;
}

WarpResult WarpToTarget(const DepthMap& target_depth, const Grid& source,
                        const Intrinsics& K, const RigidTransform& M) {
  if (target_depth.width() != source.width() ||
      target_depth.height() != source.height()) {
    throw std::invalid_argument("warp: depth and source shapes differ");
  }
  WarpResult out{Grid(source.width(), source.height(), source.channels()),
                 ValidityMask(source.width(), source.height(), false)};
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      const Projection proj = Project(Vec2(x, y), target_depth(x, y), K, M);
      bool ok = false;
      if (proj.in_front) {
        ok = SampleBilinear(source, proj.pixel, out.values.pixel(x, y));
      } else {
        // Behind the camera: keep the border-clamped sample of the origin so
        // the buffer stays defined, but never mark it valid.
        SampleBilinear(source, Vec2(0.0, 0.0), out.values.pixel(x, y));
      }
      out.mask.Set(x, y, ok);
    }
  }
  return out;
}

SynthesizedView SynthesizeView(const DepthMap& target_depth,
                               const ImageBuffer& source, const Intrinsics& K,
                               const RigidTransform& M) {
  WarpResult warped = WarpToTarget(target_depth, source, K, M);
  std::vector<double> values(warped.values.values());
  for (double& v : values) v = std::clamp(v, 0.0, 1.0);
  return {ImageBuffer(source.width(), source.height(), source.channels(),
                      std::move(values)),
          std::move(warped.mask)};
}

PointCloud DepthToPointCloud(const DepthMap& depth, const Intrinsics& K,
                             const std::optional<ImageBuffer>& color) {
  if (color && (color->width() != depth.width() ||
                color->height() != depth.height())) {
    throw std::invalid_argument("point cloud: color and depth shapes differ");
  }
  PointCloud cloud;
  cloud.points.reserve(depth.pixel_count());
  if (color) cloud.colors.reserve(depth.pixel_count());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      cloud.points.push_back(BackProject(Vec2(x, y), depth(x, y), K));
      if (color) {
        const auto px = color->pixel(x, y);
        if (px.size() >= 3) {
          cloud.colors.emplace_back(px[0], px[1], px[2]);
        } else {
          cloud.colors.emplace_back(px[0], px[0], px[0]);
        }
      }
    }
  }
  return cloud;
}

}  // namespace endodepth
