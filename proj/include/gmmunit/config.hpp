#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmmunit/data.hpp"
#include "gmmunit/gmm.hpp"
#include "gmmunit/kv.hpp"
#include "gmmunit/networks.hpp"
#include "gmmunit/objectives.hpp"
#include "gmmunit/training.hpp"

namespace gmmunit {

// Prior settings before the attribute names are known.
struct PriorSettings {
  std::string mode = "auto";  // auto follows the dataset label source
  double radius = 1.0;
  double scale = 0.5;
  std::vector<double> weights;
  std::string groups;  // factorized exclusivity groups, "0,1;2"
};

// Everything a command needs, read from one flat key = value file.
struct RunConfig {
  DatasetSpec dataset;
  PriorSettings prior;
  NetworkConfig net;
  LossWeights weights;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string out = "run";
};

// Documented keys with their defaults, one per line.
std::string config_reference();

// Reads a config document. Every problem (unknown key, malformed value,
// out-of-range value) is collected into one ConfigError.
RunConfig parse_run_config(const KeyValueDoc& doc);
KeyValueDoc to_document(const RunConfig& config);

// File (optional) plus `key=value` overrides, applied in order.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

// The prior for a dataset's attributes, following the config settings.
GmmSpec resolve_prior(const RunConfig& config, const std::vector<std::string>& attributes);

}  // namespace gmmunit
