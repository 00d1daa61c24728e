#ifndef ESC_CONFIG_HPP
#define ESC_CONFIG_HPP

#include <string>

#include "esc/harness.hpp"

namespace esc {

// Run configuration, parsed from a line-oriented `key = value` file with
// CLI-flag overrides on top. Unknown keys are rejected with their line
// number; `seed` is required (the ESC_SEED environment variable acts as a
// fallback).
struct RunConfig {
  std::string feature = "mel";    // mel | gt
  std::string arch = "proposed";  // proposed | vgg10
  bool mixup = true;
  double alpha = 0.2;
  bool augment = true;
  std::string profile = "urban";  // urban | esc
  long long seed = -1;            // -1 = unset
  std::string manifest;
  std::string out_dir;
  int epochs = 0;      // 0 = profile default
  int batch_size = 200;
  int folds = 0;       // 0 = take fold count from the manifest
  double silence_db = 60.0;
  int jobs = 1;
  bool deterministic = true;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);
std::string serialize_config(const RunConfig& cfg);

// Applies the seed fallback and checks required keys and enum values.
void validate_config(RunConfig& cfg, bool require_manifest = true);

TrainSettings to_train_settings(const RunConfig& cfg);
BandType band_type_of(const RunConfig& cfg);

}  // namespace esc

#endif  // ESC_CONFIG_HPP
