#ifndef ENDODEPTH_SYNTH_H_
#define ENDODEPTH_SYNTH_H_

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "endodepth/geometry.h"
#include "endodepth/grid.h"
#include "endodepth/teaching.h"

namespace endodepth {

enum class GeometryKind { kPlane, kTwoPlaneStep, kSphereOnPlane };
enum class TextureKind { kChecker, kSinusoid, kValueNoise, kConstant };

GeometryKind ParseGeometryKind(std::string_view name);
std::string_view GeometryKindName(GeometryKind kind);
TextureKind ParseTextureKind(std::string_view name);
std::string_view TextureKindName(TextureKind kind);

// Procedural scene in a world frame whose z axis is the optical axis of an
// identity-posed camera. Textures are functions of the 3D world point, so a
// surface point has the same colour in every view.
struct SceneSpec {
  GeometryKind geometry = GeometryKind::kPlane;
  // Fronto-parallel background plane z = plane_depth_mm; for the step scene
  // this is the far plane.
  double plane_depth_mm = 100.0;
  // Step scene: near plane z = near_depth_mm covering world x < step_x_mm.
  double near_depth_mm = 60.0;
  double step_x_mm = 0.0;
  Vec3 sphere_center = Vec3(0.0, 0.0, 80.0);
  double sphere_radius_mm = 15.0;

  TextureKind texture = TextureKind::kSinusoid;
  double texture_scale_mm = 6.0;  // wavelength / checker size / noise cell
  double texture_contrast = 0.35;
  double texture_constant = 0.5;
  int channels = 1;

  Intrinsics intrinsics;
  std::vector<RigidTransform> camera_to_world{RigidTransform::Identity()};
  std::uint64_t seed = 0;

  void Validate() const;
};

struct RenderedView {
  ImageBuffer image;
  DepthMap depth;
  RigidTransform camera_to_world;
};

// Albedo of the world point, in [0,1].
double TextureAt(const SceneSpec& spec, const Vec3& world, int channel);

// First surface hit along the ray, as world point and ray parameter (the ray
// direction has unit z in camera coordinates, so t is the camera depth).
struct RayHit {
  Vec3 point = Vec3::Zero();
  double depth = 0.0;
};
std::optional<RayHit> CastRay(const SceneSpec& spec,
                              const RigidTransform& camera_to_world,
                              const Vec2& pixel);

// Per-view ray-cast render. Throws std::runtime_error if a pixel ray misses
// every surface.
std::vector<RenderedView> Render(const SceneSpec& spec);

// Target-to-source transform M for Project(): maps target camera coordinates
// to source camera coordinates.
RigidTransform RelativePose(const RigidTransform& target_camera_to_world,
                            const RigidTransform& source_camera_to_world);

enum class PerturbationKind { kIdentity, kGamma, kJitter, kOccluder };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::kIdentity;
  double gamma = 1.0;
  // Used as-is when set; otherwise drawn from the default simulator ranges.
  std::optional<ColorJitterParams> jitter;
  // Used as-is when set; otherwise one crop drawn from the default ranges.
  std::optional<CropRect> occluder;
  // Views to perturb; empty means all.
  std::vector<int> views;
  double occluder_fill = 0.0;
};

struct PerturbedViews {
  std::vector<RenderedView> views;
  std::vector<OcclusionMask> unoccluded;  // one per view
};

PerturbedViews PerturbViews(const std::vector<RenderedView>& views,
                            const Perturbation& perturbation,
                            std::uint64_t seed);

}  // namespace endodepth

#endif  // ENDODEPTH_SYNTH_H_
