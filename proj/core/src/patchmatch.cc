#include "endodepth/patchmatch.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace endodepth {
namespace {

double Median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Evaluation of one support domain against one source frame.
struct DomainEval {
  bool valid = false;
  double phi = 0.0;
  // Sparse d phi / d depth, keyed by depth pixel index.
  std::vector<std::pair<std::size_t, double>> grad;
  std::vector<std::size_t> kinks;
  double grad_abs_sum = 0.0;
};

// Depth pixels that feed the bilinear depth sample of a member.
void StencilPixels(const BilinearStencil& s, int width,
                   std::vector<std::pair<std::size_t, double>>& out) {
  out.clear();
  const double w[4] = {s.w00(), s.w10(), s.w01(), s.w11()};
  const int xs[4] = {s.x[0], s.x[1], s.x[0], s.x[1]};
  const int ys[4] = {s.y[0], s.y[0], s.y[1], s.y[1]};
  for (int i = 0; i < 4; ++i) {
    if (w[i] == 0.0) continue;
    const std::size_t idx = static_cast<std::size_t>(ys[i]) * width + xs[i];
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& e) { return e.first == idx; });
    if (it == out.end()) {
      out.emplace_back(idx, w[i]);
    } else {
      it->second += w[i];
    }
  }
}

DomainEval EvaluateDomain(const ImageBuffer& target, const ImageBuffer& source,
                          const RigidTransform& pose, const DepthMap& depth,
                          const SupportDomain& domain, const Intrinsics& K,
                          const PhotometricConfig& cfg, bool with_gradient,
                          double kink_step) {
  const int ch = target.channels();
  const int w = depth.width(), h = depth.height();
  const Vec2 kp = domain.center;
  const int kx = static_cast<int>(std::lround(kp.x()));
  const int ky = static_cast<int>(std::lround(kp.y()));

  struct Member {
    std::vector<std::pair<std::size_t, double>> footprint;
    Vec2 dq = Vec2::Zero();
    BilinearStencil stencil;
  };
  std::vector<Member> valid_members;
  valid_members.reserve(domain.members.size());
  std::vector<std::size_t> kinks;
  std::vector<std::pair<std::size_t, double>> footprint;

  for (const Vec2& m : domain.members) {
    const BilinearStencil ds = MakeStencil(w, h, m);
    StencilPixels(ds, w, footprint);
    double d = 0.0;
    for (const auto& [idx, wt] : footprint) d += wt * depth.values()[idx];
    const ProjectionWithDerivative pwd = ProjectWithDerivative(kp, d, K, pose);
    if (!pwd.projection.in_front) continue;
    const Vec2 q = pwd.projection.pixel;
    const BilinearStencil ss = MakeStencil(source.width(), source.height(), q);
    const double reach_x = std::abs(pwd.d_pixel_d_depth.x()) * kink_step;
    const double reach_y = std::abs(pwd.d_pixel_d_depth.y()) * kink_step;
    if (!ss.in_bounds) {
      if (with_gradient && kink_step > 0.0) {
        const double out_x = std::max(-q.x(), q.x() - (source.width() - 1));
        const double out_y = std::max(-q.y(), q.y() - (source.height() - 1));
        if (out_x <= reach_x && out_y <= reach_y) {
          for (const auto& f : footprint) kinks.push_back(f.first);
        }
      }
      continue;
    }
    if (with_gradient && kink_step > 0.0 &&
        (ss.kink_distance_x <= reach_x || ss.kink_distance_y <= reach_y)) {
      for (const auto& f : footprint) kinks.push_back(f.first);
    }
    valid_members.push_back({footprint, pwd.d_pixel_d_depth, ss});
  }

  DomainEval out;
  const std::size_t n = valid_members.size();
  if (n == 0) return out;
  out.valid = true;

  std::vector<double> a(n), b(n), d_ssim(n);
  std::vector<double> d_phi_d_depth(n, 0.0);
  double ssim_sum = 0.0;
  double l1_sum = 0.0;
  const double nn = static_cast<double>(n);
  for (int c = 0; c < ch; ++c) {
    const double t = target.at(kx, ky, c);
    std::vector<BilinearSampleWithGradient> samples(n);
    for (std::size_t j = 0; j < n; ++j) {
      samples[j] = SampleBilinearWithGradient(source, valid_members[j].stencil, c);
      a[j] = t;
      b[j] = samples[j].value;
      l1_sum += std::abs(t - b[j]);
    }
    ssim_sum += SsimOfSamples(a, b, cfg.c1, cfg.c2);
    if (!with_gradient) continue;
    SsimGradientWrtB(a, b, cfg.c1, cfg.c2, d_ssim);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = b[j] - t;
      const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
      const double d_phi_d_b = -cfg.alpha / (2.0 * ch) * d_ssim[j] +
                               (1.0 - cfg.alpha) / (nn * ch) * sgn;
      const Vec2& dq = valid_members[j].dq;
      const double d_b_d_depth = samples[j].d_dx * dq.x() + samples[j].d_dy * dq.y();
      d_phi_d_depth[j] += d_phi_d_b * d_b_d_depth;
      if (kink_step > 0.0 && cfg.alpha < 1.0 &&
          std::abs(r) <= std::abs(d_b_d_depth) * kink_step) {
        for (const auto& f : valid_members[j].footprint) kinks.push_back(f.first);
      }
    }
  }
  out.phi = cfg.alpha * (1.0 - ssim_sum / ch) / 2.0 +
            (1.0 - cfg.alpha) * l1_sum / (nn * ch);
  if (with_gradient) {
    for (std::size_t j = 0; j < n; ++j) {
      for (const auto& [idx, wt] : valid_members[j].footprint) {
        out.grad.emplace_back(idx, wt * d_phi_d_depth[j]);
        out.grad_abs_sum += std::abs(wt * d_phi_d_depth[j]);
      }
    }
    out.kinks = std::move(kinks);
  }
  return out;
}

PatchLossGradient EvaluatePatchLoss(const ImageBuffer& target,
                                    std::span<const ImageBuffer> sources,
                                    std::span<const RigidTransform> poses,
                                    const DepthMap& depth,
                                    std::span<const SupportDomain> domains,
                                    const Intrinsics& K,
                                    const PhotometricConfig& cfg,
                                    bool with_gradient, double kink_step) {
  if (sources.empty() || sources.size() != poses.size()) {
    throw std::invalid_argument(
        "patch loss needs at least one source frame and one pose per source");
  }
  if (domains.empty()) {
    throw std::invalid_argument("patch loss needs at least one support domain");
  }
  if (target.width() != depth.width() || target.height() != depth.height()) {
    throw std::invalid_argument("patch loss: target and depth shapes differ");
  }
  for (const ImageBuffer& s : sources) {
    if (!s.SameShape(target)) {
      throw std::invalid_argument("patch loss: source and target shapes differ");
    }
  }
  cfg.Validate();

  PatchLossGradient result;
  PatchLossResult& loss = result.loss;
  loss.per_domain.assign(domains.size(), 0.0);
  loss.chosen_source.assign(domains.size(), -1);
  if (with_gradient) result.gradient = GradientField(depth.width(), depth.height());

  std::vector<DomainEval> evals(sources.size());
  std::vector<const DomainEval*> chosen(domains.size(), nullptr);
  std::vector<DomainEval> kept;
  kept.reserve(domains.size());
  double sum = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t k = 0; k < domains.size(); ++k) {
    int best = -1;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      evals[s] = EvaluateDomain(target, sources[s], poses[s], depth, domains[k],
                                K, cfg, with_gradient, kink_step);
      if (evals[s].valid && (best < 0 || evals[s].phi < evals[best].phi)) {
        best = static_cast<int>(s);
      }
    }
    if (best < 0) {
      ++loss.invalid_domains;
      continue;
    }
    loss.per_domain[k] = evals[best].phi;
    loss.chosen_source[k] = best;
    sum += evals[best].phi;
    ++n_valid;
    if (!with_gradient) continue;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      if (static_cast<int>(s) == best || !evals[s].valid) continue;
      // The minimum switches source within the stencil: not differentiable.
      const double gap = evals[s].phi - evals[best].phi;
      if (gap <= kink_step * (evals[s].grad_abs_sum + evals[best].grad_abs_sum)) {
        for (const auto& g : evals[best].grad) result.gradient.MarkKink(g.first);
        for (const auto& g : evals[s].grad) result.gradient.MarkKink(g.first);
      }
    }
    for (std::size_t s = 0; s < sources.size(); ++s) {
      for (std::size_t idx : evals[s].kinks) result.gradient.MarkKink(idx);
    }
    kept.push_back(std::move(evals[best]));
  }
  if (n_valid > 0) loss.value = sum / static_cast<double>(n_valid);
  if (with_gradient && n_valid > 0) {
    const double scale = 1.0 / static_cast<double>(n_valid);
    for (const DomainEval& e : kept) {
      for (const auto& [idx, g] : e.grad) result.gradient.values[idx] += scale * g;
    }
  }
  return result;
}

}  // namespace

std::vector<double> GradientMagnitude(const ImageBuffer& image) {
  const ImageBuffer gray = image.ToGray();
  const int w = gray.width(), h = gray.height();
  std::vector<double> mag(gray.pixel_count());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx =
          0.5 * (gray.at(std::min(x + 1, w - 1), y) - gray.at(std::max(x - 1, 0), y));
      const double gy =
          0.5 * (gray.at(x, std::min(y + 1, h - 1)) - gray.at(x, std::max(y - 1, 0)));
      mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

KeypointSet DetectKeypoints(const ImageBuffer& image, const KeypointConfig& cfg) {
  if (cfg.target_count < 1) {
    throw std::invalid_argument("keypoint target count must be >= 1");
  }
  if (cfg.cell < 1) throw std::invalid_argument("keypoint cell size must be >= 1");
  const int w = image.width(), h = image.height();
  const std::vector<double> mag = GradientMagnitude(image);
  KeypointSet out;
  std::vector<double> cell_values;
  for (int y0 = 0; y0 < h; y0 += cfg.cell) {
    for (int x0 = 0; x0 < w; x0 += cfg.cell) {
      cell_values.clear();
      Keypoint best;
      best.score = -1.0;
      for (int y = y0; y < std::min(y0 + cfg.cell, h); ++y) {
        for (int x = x0; x < std::min(x0 + cfg.cell, w); ++x) {
          const double g = mag[static_cast<std::size_t>(y) * w + x];
          cell_values.push_back(g);
          if (g > best.score) best = {x, y, g};
        }
      }
      const double threshold =
          std::max(cfg.threshold_factor * Median(cell_values), cfg.min_gradient);
      if (best.score > threshold) out.points.push_back(best);
    }
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const Keypoint& a, const Keypoint& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.y != b.y) return a.y < b.y;
              return a.x < b.x;
            });
  if (out.points.size() > static_cast<std::size_t>(cfg.target_count)) {
    out.points.resize(cfg.target_count);
  }
  return out;
}

CorrelationVolume::CorrelationVolume(int search_range, std::size_t keypoint_count)
    : range_(search_range) {
  if (search_range < 2 || search_range % 2 != 0) {
    throw std::invalid_argument("correlation search range must be even and >= 2");
  }
  values_.assign(keypoint_count, std::vector<double>(window_size(), 0.0));
  clamped_.assign(keypoint_count, std::vector<std::uint8_t>(window_size(), 0));
}

Vec2 CorrelationVolume::Offset(int index) const {
  return Vec2(index % range_ - range_ / 2, index / range_ - range_ / 2);
}

CorrelationVolume ComputeCorrelationVolume(const FeatureMap& features,
                                           const KeypointSet& keypoints,
                                           int search_range) {
  CorrelationVolume volume(search_range, keypoints.size());
  const int w = features.width(), h = features.height();
  const int len = features.descriptor_length();
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const Keypoint& kp = keypoints.points[k];
    if (!features.InBounds(kp.x, kp.y)) {
      throw std::invalid_argument("keypoint outside the feature map");
    }
    const auto center = features.pixel(kp.x, kp.y);
    auto values = volume.mutable_values(k);
    for (int i = 0; i < volume.window_size(); ++i) {
      const Vec2 off = volume.Offset(i);
      const int nx = kp.x + static_cast<int>(off.x());
      const int ny = kp.y + static_cast<int>(off.y());
      const int cx = std::clamp(nx, 0, w - 1);
      const int cy = std::clamp(ny, 0, h - 1);
      const auto other = features.pixel(cx, cy);
      double dot = 0.0;
      for (int c = 0; c < len; ++c) dot += center[c] * other[c];
      values[i] = dot / len;
      volume.set_clamped(k, i, cx != nx || cy != ny);
    }
  }
  return volume;
}

std::vector<Vec2> UnitRingBaseGrid() {
  return {Vec2(1, 0),  Vec2(1, 1),   Vec2(0, 1),  Vec2(-1, 1),
          Vec2(-1, 0), Vec2(-1, -1), Vec2(0, -1), Vec2(1, -1)};
}

FixedGridDecoder::FixedGridDecoder(std::vector<Vec2> base_grid)
    : base_(std::move(base_grid)) {}

std::vector<OffsetField> FixedGridDecoder::Decode(
    const CorrelationVolume& volume) const {
  OffsetField field{base_, std::vector<Vec2>(base_.size(), Vec2::Zero())};
  return std::vector<OffsetField>(volume.keypoint_count(), field);
}

SectorSoftArgmaxDecoder::SectorSoftArgmaxDecoder(std::vector<Vec2> base_grid,
                                                 double temperature,
                                                 double max_radius)
    : base_(std::move(base_grid)), temperature_(temperature),
      max_radius_(max_radius) {
  if (base_.empty()) throw std::invalid_argument("empty base offset grid");
  for (const Vec2& o : base_) {
    if (o.norm() == 0.0) throw std::invalid_argument("base offsets must be non-zero");
  }
  if (!(temperature_ > 0.0)) {
    throw std::invalid_argument("decoder temperature must be positive");
  }
  if (!(max_radius_ >= 0.0)) {
    throw std::invalid_argument("decoder max radius must be non-negative");
  }
}

std::vector<int> SectorSoftArgmaxDecoder::SectorAssignment(int search_range) const {
  CorrelationVolume probe(search_range, 0);
  std::vector<int> sector(probe.window_size(), -1);
  for (int i = 0; i < probe.window_size(); ++i) {
    const Vec2 off = probe.Offset(i);
    if (off.isZero()) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < base_.size(); ++s) {
      const double cosine = off.dot(base_[s]) / (off.norm() * base_[s].norm());
      if (cosine > best + 1e-12) {
        best = cosine;
        sector[i] = static_cast<int>(s);
      }
    }
  }
  return sector;
}

std::vector<OffsetField> SectorSoftArgmaxDecoder::Decode(
    const CorrelationVolume& volume) const {
  const std::vector<int> sector = SectorAssignment(volume.search_range());
  std::vector<OffsetField> out(volume.keypoint_count());
  for (std::size_t k = 0; k < volume.keypoint_count(); ++k) {
    const auto c = volume.values(k);
    OffsetField& field = out[k];
    field.base = base_;
    field.delta.assign(base_.size(), Vec2::Zero());
    for (std::size_t s = 0; s < base_.size(); ++s) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < volume.window_size(); ++i) {
        if (sector[i] == static_cast<int>(s)) peak = std::max(peak, c[i]);
      }
      if (!std::isfinite(peak)) continue;  // direction owns no window entry
      double wsum = 0.0;
      Vec2 mean = Vec2::Zero();
      for (int i = 0; i < volume.window_size(); ++i) {
        if (sector[i] != static_cast<int>(s)) continue;
        const double wgt = std::exp((c[i] - peak) / temperature_);
        wsum += wgt;
        mean += wgt * volume.Offset(i);
      }
      Vec2 delta = mean / wsum - base_[s];
      const double len = delta.norm();
      if (len > max_radius_) delta *= max_radius_ / len;
      field.delta[s] = delta;
    }
  }
  return out;
}

std::vector<OffsetField> DecodeOffsetsSoftArgmax(
    const CorrelationVolume& volume, const std::vector<Vec2>& base_grid,
    double temperature, double max_radius) {
  return SectorSoftArgmaxDecoder(base_grid, temperature, max_radius).Decode(volume);
}

DecoderKind ParseDecoderKind(std::string_view name) {
  if (name == "fixed") return DecoderKind::kFixedGrid;
  if (name == "softargmax") return DecoderKind::kSectorSoftArgmax;
  throw std::invalid_argument("unknown decoder '" + std::string(name) +
                              "' (expected fixed, softargmax)");
}

std::string_view DecoderKindName(DecoderKind kind) {
  return kind == DecoderKind::kFixedGrid ? "fixed" : "softargmax";
}

void PatchmatchConfig::Validate() const {
  if (search_range < 2 || search_range % 2 != 0) {
    throw std::invalid_argument("search range must be even and >= 2");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("decoder temperature must be positive");
  }
  if (!(max_radius >= 0.0)) {
    throw std::invalid_argument("decoder max radius must be non-negative");
  }
}

std::unique_ptr<OffsetDecoder> MakeDecoder(const PatchmatchConfig& cfg) {
  cfg.Validate();
  if (cfg.decoder == DecoderKind::kFixedGrid) {
    return std::make_unique<FixedGridDecoder>(UnitRingBaseGrid());
  }
  return std::make_unique<SectorSoftArgmaxDecoder>(UnitRingBaseGrid(), cfg.temperature,
                                                   cfg.max_radius);
}

std::vector<SupportDomain> BuildSupportDomains(const ImageBuffer& target,
                                               const KeypointSet& keypoints,
                                               const PatchmatchConfig& cfg) {
  const CorrelationVolume corr = ComputeCorrelationVolume(
      ExtractFeatures(target, cfg.descriptor), keypoints, cfg.search_range);
  const std::vector<OffsetField> offsets = MakeDecoder(cfg)->Decode(corr);
  return AssembleSupportDomains(keypoints, offsets, target.width(), target.height());
}

SupportDomain AssembleSupportDomain(const Keypoint& keypoint,
                                    const OffsetField& offsets, int width,
                                    int height) {
  if (offsets.base.size() != offsets.delta.size()) {
    throw std::invalid_argument("offset field: base and delta sizes differ");
  }
  SupportDomain dom;
  dom.center = keypoint.position();
  dom.members.push_back(dom.center);
  dom.clamped.push_back(0);
  for (std::size_t i = 0; i < offsets.base.size(); ++i) {
    const Vec2 off = offsets.base[i] + offsets.delta[i];
    dom.offsets.push_back(off);
    const Vec2 raw = dom.center + off;
    const Vec2 m(std::clamp(raw.x(), 0.0, width - 1.0),
                 std::clamp(raw.y(), 0.0, height - 1.0));
    dom.members.push_back(m);
    dom.clamped.push_back(m != raw ? 1 : 0);
    if ((m - dom.center).norm() < 1e-9) dom.degenerate = true;
  }
  return dom;
}

std::vector<SupportDomain> AssembleSupportDomains(
    const KeypointSet& keypoints, std::span<const OffsetField> offsets,
    int width, int height) {
  if (keypoints.size() != offsets.size()) {
    throw std::invalid_argument("one offset field per keypoint required");
  }
  std::vector<SupportDomain> out;
  out.reserve(keypoints.size());
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    out.push_back(AssembleSupportDomain(keypoints.points[k], offsets[k], width, height));
  }
  return out;
}

std::vector<double> SampleDomainDepths(const DepthMap& depth,
                                       const SupportDomain& domain) {
  std::vector<double> out;
  out.reserve(domain.members.size());
  for (const Vec2& m : domain.members) out.push_back(SampleBilinear(depth, m, 0));
  return out;
}

void WriteSupportDomainTable(std::ostream& out,
                             std::span<const SupportDomain> domains) {
  out << "# kp_x kp_y";
  if (!domains.empty()) {
    for (std::size_t i = 1; i < domains.front().members.size(); ++i) {
      out << " m" << i << "_x m" << i << "_y";
    }
  }
  out << '\n';
  for (const SupportDomain& d : domains) {
    out << d.center.x() << ' ' << d.center.y();
    for (std::size_t i = 1; i < d.members.size(); ++i) {
      out << ' ' << d.members[i].x() << ' ' << d.members[i].y();
    }
    out << '\n';
  }
}

PatchLossResult PatchPhotometricLoss(const ImageBuffer& target,
                                     std::span<const ImageBuffer> sources,
                                     std::span<const RigidTransform> poses,
                                     const DepthMap& depth,
                                     std::span<const SupportDomain> domains,
                                     const Intrinsics& K,
                                     const PhotometricConfig& cfg) {
  return EvaluatePatchLoss(target, sources, poses, depth, domains, K, cfg, false,
                           0.0)
      .loss;
}

PatchLossGradient PatchPhotometricLossGradient(
    const ImageBuffer& target, std::span<const ImageBuffer> sources,
    std::span<const RigidTransform> poses, const DepthMap& depth,
    std::span<const SupportDomain> domains, const Intrinsics& K,
    const PhotometricConfig& cfg, double kink_step) {
  return EvaluatePatchLoss(target, sources, poses, depth, domains, K, cfg, true,
                           kink_step);
}

}  // namespace endodepth
