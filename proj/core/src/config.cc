#include "endodepth/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "endodepth/io.h"

namespace endodepth {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Entries separated by ';', numbers within an entry by whitespace.
std::vector<std::vector<double>> ParseGroups(const RunConfig& cfg, const std::string& key) {
  std::vector<std::vector<double>> groups;
  std::stringstream all(cfg.GetString(key));
  std::string part;
  while (std::getline(all, part, ';')) {
    std::istringstream entry(part);
    std::vector<double> g;
    std::string tok;
    while (entry >> tok) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v)) {
        cfg.Reject(key, "expected numbers, got '" + tok + "'");
      }
      g.push_back(v);
    }
    if (!g.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace

ConfigError::ConfigError(std::string file, int line, std::string key,
                         const std::string& what)
    : std::runtime_error((file.empty() ? std::string() : file + ":" +
                                                             std::to_string(line) + ": ") +
                         (key.empty() ? std::string() : "key '" + key + "': ") + what),
      file_(std::move(file)),
      line_(line),
      key_(std::move(key)) {}

const std::map<std::string, std::string>& RunConfig::Defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      {"run.seed", "0"},

      {"scene.geometry", "two_plane"},
      {"scene.width", "64"},
      {"scene.height", "64"},
      {"scene.fx", "64"},
      {"scene.fy", "64"},
      {"scene.cx", "31.5"},
      {"scene.cy", "31.5"},
      {"scene.plane_depth_mm", "100"},
      {"scene.near_depth_mm", "60"},
      {"scene.step_x_mm", "0"},
      {"scene.sphere_center_mm", "0 0 80"},
      {"scene.sphere_radius_mm", "15"},
      {"scene.texture", "value_noise"},
      {"scene.texture_scale_mm", "20"},
      {"scene.texture_contrast", "0.35"},
      {"scene.texture_constant", "0.5"},
      {"scene.channels", "1"},
      // Source cameras, camera-to-world: "tx ty tz rx ry rz" per source,
      // separated by ';'. The target camera is the world frame.
      {"scene.sources", "-3.5 0 0 0 0 0; 3.5 0 0 0 0 0"},

      {"photometric.alpha", "0.85"},
      {"photometric.ssim_window", "3"},
      {"photometric.c1", "0.0001"},
      {"photometric.c2", "0.0009"},

      {"depth_range.min_mm", "40"},
      {"depth_range.max_mm", "150"},
      {"depth_range.momentum", "0.99"},

      {"costvolume.planes", "32"},
      {"costvolume.descriptor", "grad"},
      {"costvolume.temperature", "0.002"},

      {"keypoints.target_count", "512"},
      {"keypoints.cell", "4"},
      {"keypoints.threshold_factor", "1.5"},
      {"keypoints.min_gradient", "1e-6"},

      {"patchmatch.decoder", "softargmax"},
      {"patchmatch.descriptor", "patch3n"},
      {"patchmatch.search_range", "8"},
      {"patchmatch.temperature", "0.1"},
      {"patchmatch.max_radius", "0.5"},

      {"loss.lambda1", "1"},
      {"loss.lambda2", "0.02"},
      {"loss.lambda3", "0.002"},
      {"loss.lambda4", "0.0001"},

      {"refine.levels", "3"},
      {"refine.level_factor", "4"},
      {"refine.iterations", "100 100 300"},
      {"refine.step_sizes", "800000 400000 80000"},
      {"refine.mode", "analytic"},
      {"refine.fd_step", "0.001"},
      // mean_gt: constant at the mean ground-truth depth; constant: init_depth_mm.
      {"refine.init", "mean_gt"},
      {"refine.init_depth_mm", "80"},

      {"teacher.source", "none"},
      {"teacher.noise", "0.05"},

      {"simulator.gamma_lo", "0.5"},
      {"simulator.gamma_hi", "2"},
      {"simulator.brightness", "0.2"},
      {"simulator.contrast_lo", "0.8"},
      {"simulator.contrast_hi", "1.25"},
      {"simulator.saturation_lo", "0.8"},
      {"simulator.saturation_hi", "1.2"},
      {"simulator.hue", "0.05"},
      {"simulator.mask_count_lo", "1"},
      {"simulator.mask_count_hi", "3"},
      {"simulator.mask_size_lo", "8"},
      {"simulator.mask_size_hi", "32"},
      {"simulator.mask_fill", "0"},

      {"perturb.kind", "none"},
      {"perturb.gamma", "1.5"},
      // Empty draws from the simulator defaults; otherwise
      // "brightness contrast saturation hue".
      {"perturb.jitter", ""},
      // Empty draws one crop; otherwise "x y width height".
      {"perturb.occluder", ""},
      // View indices (0 is the target); empty means all.
      {"perturb.views", "1"},
      {"perturb.fill", "0"},

      {"metrics.clip_mm", "150"},
      {"metrics.mask_gt_beyond_clip", "true"},
      {"metrics.median_scale", "true"},
  };
  return kDefaults;
}

RunConfig::RunConfig() {
  for (const auto& [k, v] : Defaults()) values_[k] = Entry{v, "", 0};
}

void RunConfig::LoadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  LoadString(ss.str(), path.string());
}

void RunConfig::LoadString(std::string_view text, const std::string& origin) {
  std::map<std::string, int> seen;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = Trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin, line_no, "", "expected 'section.key = value'");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.') {
      throw ConfigError(origin, line_no, key, "keys have the form section.key");
    }
    if (!Defaults().count(key)) throw ConfigError(origin, line_no, key, "unknown key");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(origin, line_no, key,
                        "duplicate key (first set on line " + std::to_string(it->second) + ")");
    }
    seen[key] = line_no;
    values_[key] = Entry{value, origin, line_no};
  }
}

void RunConfig::Set(const std::string& key, const std::string& value) {
  if (!Defaults().count(key)) throw ConfigError("", 0, key, "unknown key");
  values_[key] = Entry{value, "", 0};
}

const RunConfig::Entry& RunConfig::Lookup(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("", 0, key, "unknown key");
  return it->second;
}

void RunConfig::Reject(const std::string& key, const std::string& what) const {
  const Entry& e = Lookup(key);
  throw ConfigError(e.file, e.line, key, what);
}

const std::string& RunConfig::GetString(const std::string& key) const {
  return Lookup(key).value;
}

double RunConfig::GetDouble(const std::string& key) const {
  const std::string& s = GetString(key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    Reject(key, "expected a finite number, got '" + s + "'");
  }
  return v;
}

long long RunConfig::GetInt(const std::string& key) const {
  const std::string& s = GetString(key);
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    Reject(key, "expected an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t RunConfig::GetUint(const std::string& key) const {
  const std::string& s = GetString(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    Reject(key, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool RunConfig::GetBool(const std::string& key) const {
  const std::string& s = GetString(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  Reject(key, "expected true or false, got '" + s + "'");
}

std::vector<double> RunConfig::GetDoubleList(const std::string& key) const {
  std::istringstream ss(GetString(key));
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v)) {
      Reject(key, "expected numbers, got '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

void RunConfig::Write(std::ostream& out) const {
  out << "# endodepth " << kVersion << " effective configuration\n";
  for (const auto& [k, e] : values_) out << k << " = " << e.value << '\n';
}

void RunConfig::WriteFile(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  Write(out);
}

SceneSpec SceneSpecFromConfig(const RunConfig& cfg) {
  SceneSpec spec;
  try {
    spec.geometry = ParseGeometryKind(cfg.GetString("scene.geometry"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("scene.geometry", e.what());
  }
  try {
    spec.texture = ParseTextureKind(cfg.GetString("scene.texture"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("scene.texture", e.what());
  }
  spec.intrinsics.width = static_cast<int>(cfg.GetInt("scene.width"));
  spec.intrinsics.height = static_cast<int>(cfg.GetInt("scene.height"));
  spec.intrinsics.fx = cfg.GetDouble("scene.fx");
  spec.intrinsics.fy = cfg.GetDouble("scene.fy");
  spec.intrinsics.cx = cfg.GetDouble("scene.cx");
  spec.intrinsics.cy = cfg.GetDouble("scene.cy");
  spec.plane_depth_mm = cfg.GetDouble("scene.plane_depth_mm");
  spec.near_depth_mm = cfg.GetDouble("scene.near_depth_mm");
  spec.step_x_mm = cfg.GetDouble("scene.step_x_mm");
  const std::vector<double> c = cfg.GetDoubleList("scene.sphere_center_mm");
  if (c.size() != 3) cfg.Reject("scene.sphere_center_mm", "expected 3 numbers");
  spec.sphere_center = Vec3(c[0], c[1], c[2]);
  spec.sphere_radius_mm = cfg.GetDouble("scene.sphere_radius_mm");
  spec.texture_scale_mm = cfg.GetDouble("scene.texture_scale_mm");
  spec.texture_contrast = cfg.GetDouble("scene.texture_contrast");
  spec.texture_constant = cfg.GetDouble("scene.texture_constant");
  spec.channels = static_cast<int>(cfg.GetInt("scene.channels"));
  spec.seed = cfg.GetUint("run.seed");
  spec.camera_to_world = {RigidTransform::Identity()};
  for (const auto& g : ParseGroups(cfg, "scene.sources")) {
    if (g.size() != 6) {
      cfg.Reject("scene.sources", "each source needs 'tx ty tz rx ry rz'");
    }
    spec.camera_to_world.push_back(
        RigidTransform::FromAxisAngle(Vec3(g[3], g[4], g[5]), Vec3(g[0], g[1], g[2])));
  }
  try {
    spec.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "scene", e.what());
  }
  return spec;
}

PhotometricConfig PhotometricFromConfig(const RunConfig& cfg) {
  PhotometricConfig p;
  p.alpha = cfg.GetDouble("photometric.alpha");
  p.ssim_window = static_cast<int>(cfg.GetInt("photometric.ssim_window"));
  p.c1 = cfg.GetDouble("photometric.c1");
  p.c2 = cfg.GetDouble("photometric.c2");
  try {
    p.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "photometric", e.what());
  }
  return p;
}

DepthRangeState DepthRangeFromConfig(const RunConfig& cfg) {
  DepthRangeState s;
  s.min_mm = cfg.GetDouble("depth_range.min_mm");
  s.max_mm = cfg.GetDouble("depth_range.max_mm");
  s.momentum = cfg.GetDouble("depth_range.momentum");
  try {
    s.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "depth_range", e.what());
  }
  return s;
}

void StoreDepthRange(RunConfig& cfg, const DepthRangeState& state) {
  cfg.Set("depth_range.min_mm", FormatDouble(state.min_mm));
  cfg.Set("depth_range.max_mm", FormatDouble(state.max_mm));
  cfg.Set("depth_range.momentum", FormatDouble(state.momentum));
}

SweepConfig SweepFromConfig(const RunConfig& cfg) {
  SweepConfig s;
  s.planes = static_cast<int>(cfg.GetInt("costvolume.planes"));
  try {
    s.descriptor = ParseDescriptorKind(cfg.GetString("costvolume.descriptor"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("costvolume.descriptor", e.what());
  }
  s.temperature = cfg.GetDouble("costvolume.temperature");
  if (s.planes < 2) cfg.Reject("costvolume.planes", "must be >= 2");
  if (!(s.temperature > 0.0)) cfg.Reject("costvolume.temperature", "must be > 0");
  return s;
}

PatchmatchConfig PatchmatchFromConfig(const RunConfig& cfg) {
  PatchmatchConfig p;
  try {
    p.decoder = ParseDecoderKind(cfg.GetString("patchmatch.decoder"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("patchmatch.decoder", e.what());
  }
  try {
    p.descriptor = ParseDescriptorKind(cfg.GetString("patchmatch.descriptor"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("patchmatch.descriptor", e.what());
  }
  p.search_range = static_cast<int>(cfg.GetInt("patchmatch.search_range"));
  p.temperature = cfg.GetDouble("patchmatch.temperature");
  p.max_radius = cfg.GetDouble("patchmatch.max_radius");
  try {
    p.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "patchmatch", e.what());
  }
  return p;
}

KeypointConfig KeypointsFromConfig(const RunConfig& cfg) {
  KeypointConfig k;
  k.target_count = static_cast<int>(cfg.GetInt("keypoints.target_count"));
  k.cell = static_cast<int>(cfg.GetInt("keypoints.cell"));
  k.threshold_factor = cfg.GetDouble("keypoints.threshold_factor");
  k.min_gradient = cfg.GetDouble("keypoints.min_gradient");
  if (k.target_count < 1) cfg.Reject("keypoints.target_count", "must be >= 1");
  if (k.cell < 1) cfg.Reject("keypoints.cell", "must be >= 1");
  return k;
}

AppearanceSimConfig SimulatorFromConfig(const RunConfig& cfg) {
  AppearanceSimConfig s;
  s.gamma_lo = cfg.GetDouble("simulator.gamma_lo");
  s.gamma_hi = cfg.GetDouble("simulator.gamma_hi");
  s.brightness = cfg.GetDouble("simulator.brightness");
  s.contrast_lo = cfg.GetDouble("simulator.contrast_lo");
  s.contrast_hi = cfg.GetDouble("simulator.contrast_hi");
  s.saturation_lo = cfg.GetDouble("simulator.saturation_lo");
  s.saturation_hi = cfg.GetDouble("simulator.saturation_hi");
  s.hue = cfg.GetDouble("simulator.hue");
  s.mask_count_lo = static_cast<int>(cfg.GetInt("simulator.mask_count_lo"));
  s.mask_count_hi = static_cast<int>(cfg.GetInt("simulator.mask_count_hi"));
  s.mask_size_lo = static_cast<int>(cfg.GetInt("simulator.mask_size_lo"));
  s.mask_size_hi = static_cast<int>(cfg.GetInt("simulator.mask_size_hi"));
  s.mask_fill = cfg.GetDouble("simulator.mask_fill");
  s.seed = cfg.GetUint("run.seed");
  try {
    s.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "simulator", e.what());
  }
  return s;
}

Perturbation PerturbationFromConfig(const RunConfig& cfg) {
  Perturbation p;
  const std::string& kind = cfg.GetString("perturb.kind");
  if (kind == "none") {
    p.kind = PerturbationKind::kIdentity;
  } else if (kind == "gamma") {
    p.kind = PerturbationKind::kGamma;
  } else if (kind == "jitter") {
    p.kind = PerturbationKind::kJitter;
  } else if (kind == "occluder") {
    p.kind = PerturbationKind::kOccluder;
  } else {
    cfg.Reject("perturb.kind",
               "expected none, gamma, jitter or occluder, got '" + kind + "'");
  }
  p.gamma = cfg.GetDouble("perturb.gamma");
  if (!(p.gamma > 0.0)) cfg.Reject("perturb.gamma", "must be > 0");
  const std::vector<double> j = cfg.GetDoubleList("perturb.jitter");
  if (!j.empty()) {
    if (j.size() != 4) cfg.Reject("perturb.jitter", "expected 4 numbers");
    p.jitter = ColorJitterParams{j[0], j[1], j[2], j[3]};
  }
  const std::vector<double> o = cfg.GetDoubleList("perturb.occluder");
  if (!o.empty()) {
    if (o.size() != 4) cfg.Reject("perturb.occluder", "expected x y width height");
    p.occluder = CropRect{static_cast<int>(o[0]), static_cast<int>(o[1]),
                          static_cast<int>(o[2]), static_cast<int>(o[3])};
  }
  for (double v : cfg.GetDoubleList("perturb.views")) {
    if (v < 0 || v != std::floor(v)) {
      cfg.Reject("perturb.views", "view indices are non-negative integers");
    }
    p.views.push_back(static_cast<int>(v));
  }
  p.occluder_fill = cfg.GetDouble("perturb.fill");
  return p;
}

LossWeights LossWeightsFromConfig(const RunConfig& cfg) {
  LossWeights w;
  w.lambda1 = cfg.GetDouble("loss.lambda1");
  w.lambda2 = cfg.GetDouble("loss.lambda2");
  w.lambda3 = cfg.GetDouble("loss.lambda3");
  w.lambda4 = cfg.GetDouble("loss.lambda4");
  try {
    w.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "loss", e.what());
  }
  return w;
}

RefineConfig RefineFromConfig(const RunConfig& cfg) {
  RefineConfig r;
  r.levels = static_cast<int>(cfg.GetInt("refine.levels"));
  r.level_factor = static_cast<int>(cfg.GetInt("refine.level_factor"));
  r.iterations.clear();
  for (double n : cfg.GetDoubleList("refine.iterations")) {
    if (n < 0 || n != std::floor(n)) cfg.Reject("refine.iterations", "counts are non-negative integers");
    r.iterations.push_back(static_cast<int>(n));
  }
  r.step_sizes = cfg.GetDoubleList("refine.step_sizes");
  try {
    r.mode = ParseGradientMode(cfg.GetString("refine.mode"));
  } catch (const std::invalid_argument& e) {
    cfg.Reject("refine.mode", e.what());
  }
  r.fd_step = cfg.GetDouble("refine.fd_step");
  r.depth_range = DepthRangeFromConfig(cfg);
  try {
    r.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, "refine", e.what());
  }
  return r;
}

MetricsConfig MetricsFromConfig(const RunConfig& cfg) {
  MetricsConfig m;
  m.clip_mm = cfg.GetDouble("metrics.clip_mm");
  m.mask_gt_beyond_clip = cfg.GetBool("metrics.mask_gt_beyond_clip");
  if (!(m.clip_mm > 0.0)) cfg.Reject("metrics.clip_mm", "must be > 0");
  return m;
}

}  // namespace endodepth
