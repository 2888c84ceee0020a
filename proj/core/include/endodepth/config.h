#ifndef ENDODEPTH_CONFIG_H_
#define ENDODEPTH_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "endodepth/costvolume.h"
#include "endodepth/metrics.h"
#include "endodepth/patchmatch.h"
#include "endodepth/photometric.h"
#include "endodepth/refine.h"
#include "endodepth/synth.h"
#include "endodepth/teaching.h"

namespace endodepth {

inline constexpr std::string_view kVersion = "0.3.0";

// Bad config input. file/line are empty/0 for values set outside a file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string file, int line, std::string key, const std::string& what);

  const std::string& file() const { return file_; }
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::string file_;
  int line_;
  std::string key_;
};

// Flat `section.key = value` map. Every key has a registered default; keys
// outside the registry are rejected.
class RunConfig {
 public:
  RunConfig();

  // Lines are `section.key = value`; `#` starts a comment. A key may appear
  // once per file.
  void LoadFile(const std::filesystem::path& path);
  void LoadString(std::string_view text, const std::string& origin);
  void Set(const std::string& key, const std::string& value);

  bool Has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& GetString(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  long long GetInt(const std::string& key) const;
  std::uint64_t GetUint(const std::string& key) const;
  bool GetBool(const std::string& key) const;
  std::vector<double> GetDoubleList(const std::string& key) const;

  // Every key with its effective value, sorted, after a version line.
  void Write(std::ostream& out) const;
  void WriteFile(const std::filesystem::path& path) const;

  static const std::map<std::string, std::string>& Defaults();

  // Throws ConfigError naming the key and where its value came from.
  [[noreturn]] void Reject(const std::string& key, const std::string& what) const;

 private:
  struct Entry {
    std::string value;
    std::string file;
    int line = 0;
  };
  const Entry& Lookup(const std::string& key) const;

  std::map<std::string, Entry> values_;
};

SceneSpec SceneSpecFromConfig(const RunConfig& cfg);
PhotometricConfig PhotometricFromConfig(const RunConfig& cfg);
DepthRangeState DepthRangeFromConfig(const RunConfig& cfg);
SweepConfig SweepFromConfig(const RunConfig& cfg);
KeypointConfig KeypointsFromConfig(const RunConfig& cfg);
PatchmatchConfig PatchmatchFromConfig(const RunConfig& cfg);
AppearanceSimConfig SimulatorFromConfig(const RunConfig& cfg);
Perturbation PerturbationFromConfig(const RunConfig& cfg);
LossWeights LossWeightsFromConfig(const RunConfig& cfg);
RefineConfig RefineFromConfig(const RunConfig& cfg);
MetricsConfig MetricsFromConfig(const RunConfig& cfg);

// Writes the state back under depth_range.* so it is saved with results.
void StoreDepthRange(RunConfig& cfg, const DepthRangeState& state);

}  // namespace endodepth

#endif  // ENDODEPTH_CONFIG_H_
