#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scbf/data.hpp"
#include "scbf/federation.hpp"
#include "scbf/pruning.hpp"

namespace scbf {

// Flat `key = value` experiment description. Lines starting with '#' and
// blank lines are ignored; unknown keys are rejected.
struct ExperimentConfig {
  FederationConfig federation;
  // Used only when the algorithm prunes.
  PruneConfig prune;
  // Empty means generate synthetic data.
  std::string data_path;
  std::string label_column = "label";
  SyntheticOptions synthetic;
  SplitOptions split;
  std::uint64_t data_seed = 42;
  std::string out_dir = "out";

  // Federation settings with `prune` attached iff the algorithm prunes.
  FederationConfig resolved_federation() const;
  // Throws ConfigError listing every invalid key.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
};

// Every accepted key with its default.
const std::vector<ConfigKey>& config_keys();

// Sets one key; throws ConfigError naming the key on a bad value or unknown key.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Loads `data_path` or generates synthetic data, then splits it.
PartitionedDataset prepare_data(const ExperimentConfig& config);

}  // namespace scbf
