#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmmunit/data.hpp"
#include "gmmunit/training.hpp"

namespace gmmunit {

// Scaled end-to-end experiment on the three-domain toy digit set.
struct SmokeSettings {
  std::string dir;
  int per_domain = 1000;
  int holdout = 100;  // per domain
  int image_size = 32;
  int base_channels = 16;
  int mapping_hidden = 64;
  bool reduced_depth = true;
  int batch_size = 32;
  std::int64_t iterations = 5000;
  std::uint64_t seed = 2024;
};

// Writes the toy set under dir/data once; later calls reuse it.
DatasetSpec prepare_smoke_data(const SmokeSettings& settings);

TrainState smoke_train_state(const SmokeSettings& settings, Variant variant);
std::string smoke_run_dir(const SmokeSettings& settings, Variant variant);

// Trains (or resumes) one variant to settings.iterations.
void run_smoke_training(const SmokeSettings& settings, Variant variant, std::ostream* log = nullptr);

struct SmokeThresholds {
  double translation_accuracy = 0.60;
  double probe_accuracy = 0.85;
  double diversity_ratio = 5.0;
  double sigma0_diversity = 0.01;
  double reconstruction_mae = 0.08;
  double single_flip_fraction = 0.50;
};

struct SmokeCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SmokeReport {
  double probe_accuracy = 0.0;
  double translation_accuracy = 0.0;
  double diversity_full = 0.0;
  double diversity_sigma0 = 0.0;
  double reconstruction_mae = 0.0;
  double single_flip_fraction = 0.0;
  std::vector<SmokeCheck> checks;  // (a) to (d)
};

// Data, probe and both trainings are reused from settings.dir when present.
SmokeReport run_smoke(const SmokeSettings& settings, const SmokeThresholds& thresholds = {},
                      std::ostream* log = nullptr);

}  // namespace gmmunit
