#include "endodepth/refine.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace endodepth {
namespace {

struct Terms {
  double ph = 0.0;
  double ct = 0.0;
  double st = 0.0;
  double es = 0.0;
};

Terms EvaluateTerms(const SceneInputs& scene, const DepthMap& depth,
                    LossReport* report) {
  Terms t;
  const PatchLossResult ph =
      PatchPhotometricLoss(scene.target, scene.sources, scene.poses, depth,
                           scene.domains, scene.intrinsics, scene.photometric);
  t.ph = ph.value;
  if (scene.teacher) {
    const ConsistencyLoss ct = CrossTeachingLoss(depth, *scene.teacher);
    t.ct = ct.value;
    if (report) report->ct_count = ct.evaluated;
  }
  if (scene.self_teaching) {
    const ConsistencyLoss st = SelfTeachingLoss(
        scene.self_teaching->reference, depth, scene.self_teaching->unoccluded);
    t.st = st.value;
    if (report) report->st_count = st.evaluated;
  }
  t.es = EdgeAwareSmoothness(depth, scene.target);
  if (report) {
    report->ph_count = scene.domains.size() - ph.invalid_domains;
    report->es_count = depth.pixel_count();
  }
  return t;
}

double Combine(const Terms& t, const LossWeights& w) {
  return w.lambda1 * t.ph + w.lambda2 * t.ct + w.lambda3 * t.st + w.lambda4 * t.es;
}

void CombineFields(LossGradient& g, const LossWeights& w) {
  g.total = GradientField(g.ph.width, g.ph.height);
  g.total.Accumulate(g.ph, w.lambda1);
  g.total.Accumulate(g.ct, w.lambda2);
  g.total.Accumulate(g.st, w.lambda3);
  g.total.Accumulate(g.es, w.lambda4);
}

// Bilinear upsampling from a node grid with spacing `s` to pixels, as one
// 1D two-tap filter per axis.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

AxisTaps MakeTaps(int pixels, int spacing, int* nodes) {
  *nodes = (pixels - 1 + spacing - 1) / spacing + 1;
  AxisTaps taps;
  for (int x = 0; x < pixels; ++x) {
    const int i = x / spacing;
    const double f = static_cast<double>(x - i * spacing) / spacing;
    taps.i0.push_back(i);
    taps.i1.push_back(std::min(i + 1, *nodes - 1));
    taps.w0.push_back(1.0 - f);
    taps.w1.push_back(f);
  }
  return taps;
}

class CoarseGrid {
 public:
  CoarseGrid(int width, int height, int spacing) : width_(width), height_(height) {
    tx_ = MakeTaps(width, spacing, &nx_);
    ty_ = MakeTaps(height, spacing, &ny_);
  }

  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }

  void Upsample(const std::vector<double>& c, std::vector<double>& out) const {
    out.assign(static_cast<std::size_t>(width_) * height_, 0.0);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        out[static_cast<std::size_t>(y) * width_ + x] =
            ty_.w0[y] * (tx_.w0[x] * node(c, tx_.i0[x], ty_.i0[y]) +
                         tx_.w1[x] * node(c, tx_.i1[x], ty_.i0[y])) +
            ty_.w1[y] * (tx_.w0[x] * node(c, tx_.i0[x], ty_.i1[y]) +
                         tx_.w1[x] * node(c, tx_.i1[x], ty_.i1[y]));
      }
    }
  }

  void Adjoint(const std::vector<double>& g, std::vector<double>& out) const {
    out.assign(size(), 0.0);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double v = g[static_cast<std::size_t>(y) * width_ + x];
        if (v == 0.0) continue;
        out[Node(tx_.i0[x], ty_.i0[y])] += tx_.w0[x] * ty_.w0[y] * v;
        out[Node(tx_.i1[x], ty_.i0[y])] += tx_.w1[x] * ty_.w0[y] * v;
        out[Node(tx_.i0[x], ty_.i1[y])] += tx_.w0[x] * ty_.w1[y] * v;
        out[Node(tx_.i1[x], ty_.i1[y])] += tx_.w1[x] * ty_.w1[y] * v;
      }
    }
  }

 private:
  std::size_t Node(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
  double node(const std::vector<double>& c, int i, int j) const { return c[Node(i, j)]; }

  int width_, height_;
  int nx_ = 0, ny_ = 0;
  AxisTaps tx_, ty_;
};

DepthMap Compose(const std::vector<double>& base, const CoarseGrid& grid,
                 const std::vector<double>& correction, int width, int height,
                 double lo, double hi, std::vector<double>& scratch) {
  grid.Upsample(correction, scratch);
  for (std::size_t i = 0; i < scratch.size(); ++i) {
    scratch[i] = std::clamp(base[i] + scratch[i], lo, hi);
  }
  return DepthMap(width, height, scratch);
}

}  // namespace

void LossWeights::Validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4}) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
}

GradientMode ParseGradientMode(std::string_view name) {
  if (name == "analytic") return GradientMode::kAnalytic;
  if (name == "fd" || name == "finite_difference") return GradientMode::kFiniteDifference;
  throw std::invalid_argument("unknown gradient mode '" + std::string(name) +
                              "' (expected analytic or fd)");
}

std::string_view GradientModeName(GradientMode mode) {
  return mode == GradientMode::kAnalytic ? "analytic" : "fd";
}

void RefineConfig::Validate() const {
  if (levels < 1) throw std::invalid_argument("refine needs at least one level");
  if (level_factor < 2) throw std::invalid_argument("refine level factor must be >= 2");
  if (iterations.empty() ||
      (iterations.size() != 1 && static_cast<int>(iterations.size()) != levels)) {
    throw std::invalid_argument("refine needs one iteration count or one per level");
  }
  for (int n : iterations) {
    if (n < 0) throw std::invalid_argument("refine iterations must be >= 0");
  }
  if (step_sizes.empty() ||
      (step_sizes.size() != 1 && static_cast<int>(step_sizes.size()) != levels)) {
    throw std::invalid_argument("refine needs one step size or one per level");
  }
  for (double s : step_sizes) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("refine step sizes must be > 0");
    }
  }
  if (!(fd_step > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  depth_range.Validate();
}

double RefineConfig::StepSize(int level) const {
  return step_sizes.size() == 1 ? step_sizes[0] : step_sizes[level];
}

int RefineConfig::Iterations(int level) const {
  return iterations.size() == 1 ? iterations[0] : iterations[level];
}

int RefineConfig::TotalIterations() const {
  int n = 0;
  for (int level = 0; level < levels; ++level) n += Iterations(level);
  return n;
}

void SceneInputs::Validate() const {
  if (target.empty()) throw std::invalid_argument("scene has no target image");
  if (sources.empty() || sources.size() != poses.size()) {
    throw std::invalid_argument("scene needs >= 1 source and one pose per source");
  }
  for (const ImageBuffer& s : sources) {
    if (!s.SameShape(target)) {
      throw std::invalid_argument("scene source and target shapes differ");
    }
  }
  intrinsics.Validate();
  if (intrinsics.width != target.width() || intrinsics.height != target.height()) {
    throw std::invalid_argument("scene intrinsics do not match the image size");
  }
  if (domains.empty()) throw std::invalid_argument("scene has no support domains");
  photometric.Validate();
  if (teacher && (teacher->width() != target.width() ||
                  teacher->height() != target.height())) {
    throw std::invalid_argument("teacher depth shape differs from the target");
  }
  if (self_teaching) {
    const DepthMap& r = self_teaching->reference;
    if (r.width() != target.width() || r.height() != target.height() ||
        !self_teaching->unoccluded.SameShape(r)) {
      throw std::invalid_argument("self-teaching inputs differ in shape from the target");
    }
  }
}

LossReport TotalLoss(const SceneInputs& scene, const DepthMap& depth,
                     const LossWeights& weights) {
  scene.Validate();
  weights.Validate();
  if (depth.width() != scene.target.width() || depth.height() != scene.target.height()) {
    throw std::invalid_argument("depth shape differs from the target");
  }
  LossReport report;
  const Terms t = EvaluateTerms(scene, depth, &report);
  report.ph = t.ph;
  report.ct = t.ct;
  report.st = t.st;
  report.es = t.es;
  report.total = Combine(t, weights);
  return report;
}

LossGradient LossGradientWrtDepth(const SceneInputs& scene,
                                  const DepthMap& depth,
                                  const LossWeights& weights,
                                  GradientMode mode, double fd_step) {
  if (!(fd_step > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  LossGradient g;
  g.report = TotalLoss(scene, depth, weights);
  const int w = depth.width(), h = depth.height();
  g.ph = g.ct = g.st = g.es = GradientField(w, h);
  g.teacher = g.self_reference = GradientField(w, h);

  if (mode == GradientMode::kAnalytic) {
    g.ph = PatchPhotometricLossGradient(scene.target, scene.sources, scene.poses,
                                        depth, scene.domains, scene.intrinsics,
                                        scene.photometric, fd_step)
               .gradient;
    if (scene.teacher) {
      ConsistencyGradient cg =
          CrossTeachingGradient(depth, *scene.teacher, kConsistencyEps, fd_step);
      g.ct = std::move(cg.wrt_first);
      g.teacher = std::move(cg.wrt_second);
    }
    if (scene.self_teaching) {
      ConsistencyGradient sg = SelfTeachingGradient(
          scene.self_teaching->reference, depth, scene.self_teaching->unoccluded,
          kConsistencyEps, fd_step);
      g.st = std::move(sg.wrt_second);
      g.self_reference = std::move(sg.wrt_first);
    }
    g.es = EdgeAwareSmoothnessGradient(depth, scene.target, fd_step).gradient;
  } else {
    std::vector<double> values = depth.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d0 = values[i];
      values[i] = d0 + fd_step;
      const Terms plus = EvaluateTerms(scene, DepthMap(w, h, values), nullptr);
      values[i] = d0 - fd_step;
      const Terms minus = EvaluateTerms(scene, DepthMap(w, h, values), nullptr);
      values[i] = d0;
      const double inv = 1.0 / (2.0 * fd_step);
      g.ph.values[i] = (plus.ph - minus.ph) * inv;
      g.ct.values[i] = (plus.ct - minus.ct) * inv;
      g.st.values[i] = (plus.st - minus.st) * inv;
      g.es.values[i] = (plus.es - minus.es) * inv;
    }
  }
  CombineFields(g, weights);
  return g;
}

RefineResult RefineDepth(const DepthMap& initial, const SceneInputs& scene,
                         const RefineConfig& config, const LossWeights& weights) {
  config.Validate();
  weights.Validate();
  scene.Validate();
  const int w = initial.width(), h = initial.height();
  if (w != scene.target.width() || h != scene.target.height()) {
    throw std::invalid_argument("initial depth shape differs from the target");
  }
  const double lo = config.LowerBound(), hi = config.UpperBound();

  RefineResult result;
  result.depth = initial;
  std::vector<double> scratch;
  std::vector<double> grad_nodes;

  for (int level = 0; level < config.levels; ++level) {
    int spacing = 1;
    for (int k = level + 1; k < config.levels; ++k) spacing *= config.level_factor;
    const CoarseGrid grid(w, h, spacing);
    const std::vector<double> base = result.depth.values();
    std::vector<double> correction(grid.size(), 0.0);
    const double step = config.StepSize(level);

    const int iterations = config.Iterations(level);
    for (int it = 0; it < iterations; ++it) {
      const DepthMap current = Compose(base, grid, correction, w, h, lo, hi, scratch);
      if (config.mode == GradientMode::kAnalytic) {
        const LossGradient g = LossGradientWrtDepth(scene, current, weights,
                                                    GradientMode::kAnalytic,
                                                    config.fd_step);
        result.trace.push_back(g.report);
        grid.Adjoint(g.total.values, grad_nodes);
      } else {
        result.trace.push_back(TotalLoss(scene, current, weights));
        grad_nodes.assign(correction.size(), 0.0);
        for (std::size_t n = 0; n < correction.size(); ++n) {
          const double c0 = correction[n];
          correction[n] = c0 + config.fd_step;
          const double plus =
              TotalLoss(scene, Compose(base, grid, correction, w, h, lo, hi, scratch),
                        weights)
                  .total;
          correction[n] = c0 - config.fd_step;
          const double minus =
              TotalLoss(scene, Compose(base, grid, correction, w, h, lo, hi, scratch),
                        weights)
                  .total;
          correction[n] = c0;
          grad_nodes[n] = (plus - minus) / (2.0 * config.fd_step);
        }
      }
      result.trace_level.push_back(level);
      for (std::size_t n = 0; n < correction.size(); ++n) {
        correction[n] -= step * grad_nodes[n];
      }
    }
    if (iterations > 0) {
      result.depth = Compose(base, grid, correction, w, h, lo, hi, scratch);
    }
  }
  result.trace.push_back(TotalLoss(scene, result.depth, weights));
  result.trace_level.push_back(config.levels - 1);
  return result;
}

}  // namespace endodepth
