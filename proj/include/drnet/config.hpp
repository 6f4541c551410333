#pragma once

// Job configuration: a plain-text `key = value` file (with `#` comments)
// covering every tunable of the pipeline. Unknown keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "drnet/augment.hpp"
#include "drnet/classifier.hpp"
#include "drnet/dataset.hpp"
#include "drnet/dcgan.hpp"
#include "drnet/imageproc.hpp"
#include "drnet/training.hpp"

namespace drnet {

struct JobConfig {
  std::filesystem::path data_root;
  std::filesystem::path data_manifest;  // optional CSV; relative paths resolve against data_root
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  SplitFractions split{};
  PreprocessConfig preprocess{};
  AugmentConfig augment{};
  GanConfig gan{};
  ClassifierConfig classifier{};
  TrainConfig train{};
  /// GAN checkpoint per minority class (index 1..4); empty disables injection for that class.
  std::array<std::filesystem::path, kNumClasses> synthetic{};
  double synthetic_target_fraction = 0.5;

  /// Copies the global seed and thread count into the sub-configs and
  /// validates everything. Throws ConfigError.
  void finalize();
};

struct ConfigKey {
  std::string key;
  std::string description;
};

/// Every accepted key with a one-line description, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value. Throws ConfigError for unknown keys or bad values.
void set_config_value(JobConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const JobConfig& config, const std::string& key);

/// Parses config text; `source` names the origin in error messages.
JobConfig parse_job_config(const std::string& text, const std::string& source = "<config>");
/// Throws ConfigError if the file cannot be read.
JobConfig load_job_config(const std::filesystem::path& path);

/// Resolved (key, value) pairs for every key.
std::vector<std::pair<std::string, std::string>> resolved_config(const JobConfig& config);
/// Writes `config.<key>=<value>` lines.
void log_config(std::ostream& out, const JobConfig& config);

}  // namespace drnet
