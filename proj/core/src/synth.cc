#include "endodepth/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "endodepth/random.h"

namespace endodepth {
namespace {

constexpr int kSinusoidComponents = 4;
constexpr std::array<double, kSinusoidComponents> kWavelengthRatios = {1.0, 0.71, 0.53,
                                                                       1.37};
constexpr std::array<double, kSinusoidComponents> kAmplitudes = {1.0, 0.7, 0.5, 0.8};

struct SinusoidComponent {
  Vec3 direction;
  double wavelength;
  double phase;
};

// Components are a pure function of (seed, channel, scale).
std::array<SinusoidComponent, kSinusoidComponents> SinusoidBasis(
    std::uint64_t seed, int channel, double scale) {
  Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(channel) + 1);
  std::array<SinusoidComponent, kSinusoidComponents> basis;
  for (int k = 0; k < kSinusoidComponents; ++k) {
    // Mostly in-plane directions with some depth dependence so that parallel
    // surfaces at different depths carry different patterns.
    const double theta = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
    const double tilt = UniformReal(rng, 0.15, 0.45);
    basis[k].direction =
        Vec3(std::cos(theta), std::sin(theta), tilt).normalized();
    basis[k].wavelength = scale * kWavelengthRatios[k];
    basis[k].phase = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return basis;
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double LatticeValue(std::uint64_t seed, int channel, std::int64_t ix,
                    std::int64_t iy, std::int64_t iz) {
  std::uint64_t h = SplitMix64(seed ^ 0x5851F42D4C957F2Dull);
  h = SplitMix64(h ^ static_cast<std::uint64_t>(ix));
  h = SplitMix64(h ^ static_cast<std::uint64_t>(iy));
  h = SplitMix64(h ^ static_cast<std::uint64_t>(iz));
  h = SplitMix64(h ^ static_cast<std::uint64_t>(channel));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double Fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double ValueNoise(std::uint64_t seed, int channel, const Vec3& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double u = Fade(p.x() - fx), v = Fade(p.y() - fy), w = Fade(p.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz) {
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const double wt = (dx ? u : 1.0 - u) * (dy ? v : 1.0 - v) * (dz ? w : 1.0 - w);
        acc += wt * LatticeValue(seed, channel, ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

std::optional<double> IntersectZPlane(const Vec3& origin, const Vec3& dir, double z) {
  if (dir.z() == 0.0) return std::nullopt;
  const double t = (z - origin.z()) / dir.z();
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

std::optional<double> IntersectSphere(const Vec3& origin, const Vec3& dir,
                                      const Vec3& center, double radius) {
  const Vec3 oc = origin - center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  const double t1 = (-b + sq) / (2.0 * a);
  if (t0 > 0.0) return t0;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

}  // namespace

GeometryKind ParseGeometryKind(std::string_view name) {
  if (name == "plane") return GeometryKind::kPlane;
  if (name == "two_plane") return GeometryKind::kTwoPlaneStep;
  if (name == "sphere_on_plane") return GeometryKind::kSphereOnPlane;
  throw std::invalid_argument("unknown geometry '" + std::string(name) +
                              "' (expected plane, two_plane, sphere_on_plane)");
}

std::string_view GeometryKindName(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::kPlane: return "plane";
    case GeometryKind::kTwoPlaneStep: return "two_plane";
    case GeometryKind::kSphereOnPlane: return "sphere_on_plane";
  }
  return "unknown";
}

TextureKind ParseTextureKind(std::string_view name) {
  if (name == "checker") return TextureKind::kChecker;
  if (name == "sinusoid") return TextureKind::kSinusoid;
  if (name == "value_noise") return TextureKind::kValueNoise;
  if (name == "constant") return TextureKind::kConstant;
  throw std::invalid_argument(
      "unknown texture '" + std::string(name) +
      "' (expected checker, sinusoid, value_noise, constant)");
}

std::string_view TextureKindName(TextureKind kind) {
  switch (kind) {
    case TextureKind::kChecker: return "checker";
    case TextureKind::kSinusoid: return "sinusoid";
    case TextureKind::kValueNoise: return "value_noise";
    case TextureKind::kConstant: return "constant";
  }
  return "unknown";
}

void SceneSpec::Validate() const {
  intrinsics.Validate();
  if (camera_to_world.empty()) throw std::invalid_argument("scene needs >= 1 pose");
  for (const RigidTransform& t : camera_to_world) t.Validate(1e-9);
  if (!(plane_depth_mm > 0.0)) throw std::invalid_argument("plane depth must be > 0");
  if (geometry == GeometryKind::kTwoPlaneStep &&
      !(near_depth_mm > 0.0 && near_depth_mm < plane_depth_mm)) {
    throw std::invalid_argument("step scene needs 0 < near depth < far depth");
  }
  if (geometry == GeometryKind::kSphereOnPlane &&
      (!(sphere_radius_mm > 0.0) ||
       sphere_center.z() + sphere_radius_mm > plane_depth_mm + sphere_radius_mm)) {
    throw std::invalid_argument("sphere must have positive radius in front of the plane");
  }
  if (!(texture_scale_mm > 0.0)) throw std::invalid_argument("texture scale must be > 0");
  if (!(texture_contrast >= 0.0 && texture_contrast <= 0.5)) {
    throw std::invalid_argument("texture contrast must lie in [0, 0.5]");
  }
  if (!(texture_constant >= 0.0 && texture_constant <= 1.0)) {
    throw std::invalid_argument("texture constant must lie in [0, 1]");
  }
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("scene channels must be 1 or 3");
  }
}

double TextureAt(const SceneSpec& spec, const Vec3& world, int channel) {
  const double s = spec.texture_scale_mm;
  double f = 0.0;
  switch (spec.texture) {
    case TextureKind::kConstant:
      return spec.texture_constant;
    case TextureKind::kChecker: {
      const auto parity = static_cast<std::int64_t>(std::floor(world.x() / s)) +
                          static_cast<std::int64_t>(std::floor(world.y() / s)) +
                          static_cast<std::int64_t>(std::floor(world.z() / s)) +
                          channel;
      f = (parity % 2 == 0) ? 1.0 : -1.0;
      break;
    }
    case TextureKind::kSinusoid: {
      const auto basis = SinusoidBasis(spec.seed, channel, s);
      double norm = 0.0;
      for (int k = 0; k < kSinusoidComponents; ++k) {
        f += kAmplitudes[k] *
             std::sin(2.0 * std::numbers::pi * basis[k].direction.dot(world) /
                          basis[k].wavelength +
                      basis[k].phase);
        norm += kAmplitudes[k];
      }
      f /= norm;
      break;
    }
    case TextureKind::kValueNoise: {
      f = (ValueNoise(spec.seed, channel, world / s) +
           0.5 * ValueNoise(spec.seed + 101, channel, 2.0 * world / s)) /
          1.5;
      break;
    }
  }
  return std::clamp(0.5 + spec.texture_contrast * f, 0.0, 1.0);
}

std::optional<RayHit> CastRay(const SceneSpec& spec,
                              const RigidTransform& camera_to_world,
                              const Vec2& pixel) {
  const Intrinsics& K = spec.intrinsics;
  const Vec3 ray_cam((pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy, 1.0);
  const Vec3 origin = camera_to_world.translation();
  const Vec3 dir = camera_to_world.rotation() * ray_cam;

  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](std::optional<double> t) {
    if (t && *t < best) best = *t;
  };
  consider(IntersectZPlane(origin, dir, spec.plane_depth_mm));
  if (spec.geometry == GeometryKind::kTwoPlaneStep) {
    const auto t = IntersectZPlane(origin, dir, spec.near_depth_mm);
    if (t && (origin + *t * dir).x() < spec.step_x_mm) consider(t);
  } else if (spec.geometry == GeometryKind::kSphereOnPlane) {
    consider(IntersectSphere(origin, dir, spec.sphere_center, spec.sphere_radius_mm));
  }
  if (!std::isfinite(best)) return std::nullopt;
  return RayHit{origin + best * dir, best};
}

std::vector<RenderedView> Render(const SceneSpec& spec) {
  spec.Validate();
  const Intrinsics& K = spec.intrinsics;
  std::vector<RenderedView> views;
  views.reserve(spec.camera_to_world.size());
  for (const RigidTransform& pose : spec.camera_to_world) {
    std::vector<double> pixels(static_cast<std::size_t>(K.width) * K.height *
                               spec.channels);
    std::vector<double> depth(static_cast<std::size_t>(K.width) * K.height);
    for (int y = 0; y < K.height; ++y) {
      for (int x = 0; x < K.width; ++x) {
        const auto hit = CastRay(spec, pose, Vec2(x, y));
        if (!hit) {
          throw std::runtime_error("render: pixel (" + std::to_string(x) + ", " +
                                   std::to_string(y) + ") sees no surface");
        }
        const std::size_t i = static_cast<std::size_t>(y) * K.width + x;
        depth[i] = hit->depth;
        for (int c = 0; c < spec.channels; ++c) {
          pixels[i * spec.channels + c] = TextureAt(spec, hit->point, c);
        }
      }
    }
    views.push_back({ImageBuffer(K.width, K.height, spec.channels, std::move(pixels)),
                     DepthMap(K.width, K.height, std::move(depth)), pose});
  }
  return views;
}

RigidTransform RelativePose(const RigidTransform& target_camera_to_world,
                            const RigidTransform& source_camera_to_world) {
  return source_camera_to_world.Inverse() * target_camera_to_world;
}

PerturbedViews PerturbViews(const std::vector<RenderedView>& views,
                            const Perturbation& perturbation,
                            std::uint64_t seed) {
  PerturbedViews out;
  out.views = views;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ImageBuffer& img = views[v].image;
    out.unoccluded.emplace_back(img.width(), img.height(), true);
  }
  if (perturbation.kind == PerturbationKind::kIdentity) return out;

  std::vector<int> targets = perturbation.views;
  if (targets.empty()) {
    for (std::size_t v = 0; v < views.size(); ++v) targets.push_back(static_cast<int>(v));
  }
  for (int v : targets) {
    if (v < 0 || static_cast<std::size_t>(v) >= views.size()) {
      throw std::invalid_argument("perturbation names view " + std::to_string(v) +
                                  " but only " + std::to_string(views.size()) +
                                  " exist");
    }
    const ImageBuffer& img = views[v].image;
    AppearanceSimConfig sim = AppearanceSimConfig::Identity();
    sim.seed = seed + static_cast<std::uint64_t>(v);
    AppearanceParams params;
    switch (perturbation.kind) {
      case PerturbationKind::kIdentity:
        break;
      case PerturbationKind::kGamma:
        params.gamma = perturbation.gamma;
        break;
      case PerturbationKind::kJitter:
        if (perturbation.jitter) {
          params.jitter = *perturbation.jitter;
        } else {
          const AppearanceSimConfig defaults;
          sim.brightness = defaults.brightness;
          sim.contrast_lo = defaults.contrast_lo;
          sim.contrast_hi = defaults.contrast_hi;
          sim.saturation_lo = defaults.saturation_lo;
          sim.saturation_hi = defaults.saturation_hi;
          sim.hue = defaults.hue;
          params.jitter = SampleAppearanceParams(sim, img.width(), img.height()).jitter;
        }
        break;
      case PerturbationKind::kOccluder:
        if (perturbation.occluder) {
          params.crops.push_back(*perturbation.occluder);
        } else {
          sim.mask_count_lo = sim.mask_count_hi = 1;
          params.crops = SampleAppearanceParams(sim, img.width(), img.height()).crops;
        }
        break;
    }
    SimulatedAppearance sim_out = ApplyAppearance(img, params, perturbation.occluder_fill);
    out.views[v].image = std::move(sim_out.image);
    out.unoccluded[v] = std::move(sim_out.unoccluded);
  }
  return out;
}

}  // namespace endodepth
