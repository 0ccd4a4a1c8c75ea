#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camo/diffusion.hpp"

namespace camo {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "run";

  ModelConfig model;

  int codec_steps = 500;
  int codec_batch = 4;
  double codec_lr = 2e-3;

  int train_steps = 2000;
  int train_batch = 4;
  double train_lr = 1e-3;
  int checkpoint_every = 500;
  /// Stage-2 checkpoint to continue from; empty starts fresh.
  std::string resume;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in serialization order.
const std::vector<ConfigKey>& config_keys();

/// `source` names the input in error messages.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
/// Key=value text covering every key, with `#` help comments.
std::string serialize_config(const RunConfig& config);

std::string config_value(const RunConfig& config, const std::string& key);
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace camo
