#pragma once

#include "floco/federation.hpp"
#include "floco/partition.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace floco {

enum class PartitionKind { dirichlet, fivefold };

/// Synthetic data and partitioning settings.
struct DataConfig {
  int classes = 10;
  int input_dim = 16;
  int samples = 10000;  // N, split evenly over classes
  double spread = 0.6;
  PartitionKind partition = PartitionKind::dirichlet;
  double dirichlet_beta = 0.3;
  double fivefold_q = 80.0;
  int fivefold_groups = 5;
  double test_fraction = 0.2;

  void validate(int clients) const;
};

struct ExperimentConfig {
  FederationConfig federation;
  DataConfig data;
  int surface_points = 500;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> warnings;
};

/// Parses a JSON object of flat keys. Unknown keys and invariant violations
/// throw std::invalid_argument with the field name; keys that the chosen
/// strategy ignores are accepted with a warning.
ParsedConfig parse_config(const std::string& text);

/// Every field with its resolved value; parse_config(to_json(c).dump())
/// reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

/// Dataset, partition and global test set for one seed.
struct PreparedData {
  LabeledDataset pool;
  PartitionResult partition;
  FederatedData federated;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace floco
