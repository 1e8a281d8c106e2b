#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vmamba/enhance_net.hpp"

namespace vmamba {

inline constexpr const char* kSeedEnvVar = "VMAMBA_SEED";

struct TrainSettings {
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  std::size_t batch = 1;
  std::size_t checkpoint_every = 100;
  std::size_t crop = 0;  // square training crop side; 0 uses whole frames
};

struct DataPaths {
  std::filesystem::path low_dir;
  std::filesystem::path gt_dir;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path checkpoint;  // used by enhance; defaults to checkpoint_dir/latest
  std::filesystem::path loss_log;    // defaults to checkpoint_dir/loss.csv
};

struct PreprocessSettings {
  bool adapt_color = false;
};

/// Run configuration, stored as JSON with the sections "model", "train",
/// "data" and "preprocess". Every key is optional; unknown keys and values
/// out of range are ConfigurationErrors. Relative paths resolve against the
/// directory of the config file.
struct RunConfig {
  EnhanceNetConfig model;
  TrainSettings train;
  DataPaths data;
  PreprocessSettings preprocess;

  void validate() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path loss_log_path() const;
};

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
// Reads the file, then applies the seed override from the environment.
RunConfig load_run_config(const std::filesystem::path& file);
// Seed from `kSeedEnvVar` if set; throws ConfigurationError when malformed.
void apply_seed_override(RunConfig& cfg);

}  // namespace vmamba
