#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "eyeadapt/filterkit.hpp"
#include "eyeadapt/segkit.hpp"
#include "eyeadapt/translate.hpp"

namespace eyeadapt {

// ---------------------------------------------------------------------------
// TOML subset: [section] headers, key = value lines, # comments. Values are
// strings, numbers, booleans, or flat arrays of strings or numbers.

using ConfigValue = std::variant<bool, double, std::string, std::vector<std::string>, std::vector<double>>;

class ConfigDoc {
 public:
  static ConfigDoc parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigDoc load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  const ConfigValue* find(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, ConfigValue value);
  /// "section.key=value" with the value in the same syntax as the file.
  void set_from_text(const std::string& assignment);

  const std::map<std::string, std::map<std::string, ConfigValue>>& sections() const { return sections_; }
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

ConfigValue parse_config_value(const std::string& text, const std::string& where);

// ---------------------------------------------------------------------------

struct DataConfig {
  int source_count = 200;
  int target_count = 200;
  int height = 64;
  int width = 64;
};

enum class ThresholdRule { kFixed, kMean };

struct FilterStageConfig {
  SiameseConfig siamese;
  std::string dataset = "srcgan";
  double threshold = 0.005;
  ThresholdRule rule = ThresholdRule::kFixed;
};

struct SegStageConfig {
  SegTrainConfig base;
  std::vector<SegMode> modes{SegMode::kRitnet};
  std::vector<std::string> datasets{"source", "srcgan"};
  std::vector<int> n_real{0};
};

struct EvalStageConfig {
  bool pca_joint = true;  // false fits on target latents only
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::filesystem::path output_root = "eyeadapt_out";
  DataConfig data;
  TranslateConfig translate;
  std::vector<TranslateMode> translate_modes{TranslateMode::kCgan, TranslateMode::kSrcgan};
  FilterStageConfig filter;
  SegStageConfig seg;
  EvalStageConfig eval;
  ConfigDoc doc;  // the validated source document, echoed into run manifests
};

/// Builds and validates a pipeline config. Unknown sections or keys and
/// ill-typed values raise ConfigError naming "section.key". All stage seeds
/// derive from [global].seed. EYEADAPT_OUTPUT_ROOT, when set, overrides
/// [global].output_root.
PipelineConfig pipeline_config(const ConfigDoc& doc);

/// Every key accepted in each section, for help text and validation.
const std::map<std::string, std::vector<std::string>>& known_config_keys();

}  // namespace eyeadapt
