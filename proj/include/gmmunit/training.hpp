#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gmmunit/data.hpp"
#include "gmmunit/features.hpp"
#include "gmmunit/gmm.hpp"
#include "gmmunit/networks.hpp"
#include "gmmunit/objectives.hpp"
#include "gmmunit/optimizer.hpp"
#include "gmmunit/rng.hpp"

namespace gmmunit {

// Ablations. sigma0 is the deterministic StarGAN-like prior (all scales zero);
// no_disent drops E_c and feeds the image plus the tiled code to G.
enum class Variant { full, sigma0, no_cyc, no_attr_rec, no_iso, no_disent };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

struct TrainConfig {
  int batch_size = 32;
  std::int64_t iterations = 5000;
  double base_lr = 1e-4;
  std::int64_t lr_half_every = 200000;
  std::int64_t snapshot_every = 1000;
  std::int64_t sample_every = 1000;
  std::int64_t log_every = 100;
  bool mirror = true;
  AttributePointMode attr_point = AttributePointMode::mean;
  AdvFlavor adv_flavor = AdvFlavor::nonsaturating;
  // Every item is translated to every domain instead of one random target.
  bool exhaustive_targets = false;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;

  void validate() const;
};

// Rewrites the configuration for a variant. Applied once when a run starts.
void apply_variant(Variant variant, NetworkConfig& net, GmmSpec& gmm, LossWeights& weights);

struct TrainState {
  NetworkConfig net;
  GmmSpec gmm_spec;
  AttributeGmm gmm;
  LossWeights weights;
  TrainConfig train;
  Networks nets;
  AdamMoments opt_g;
  AdamMoments opt_d;
  std::int64_t iteration = 0;
  Rng rng;
  // Needed only when weights.perc > 0; not persisted in checkpoints.
  std::shared_ptr<FeatureExtractor> perceptual;

  DomainLossMode domain_mode() const {
    return gmm.mode == GmmMode::categorical ? DomainLossMode::categorical : DomainLossMode::multilabel;
  }
};

// Validates every part, applies the variant and initialises the networks
// from the run seed.
TrainState make_train_state(NetworkConfig net, GmmSpec gmm, LossWeights weights, TrainConfig train,
                            torch::Dtype dtype = torch::kFloat32);

// Random quantities consumed by one step.
struct StepSamples {
  std::vector<bool> flipped;
  std::vector<DomainLabel> targets;
  std::vector<Vector> z;
  std::vector<Vector> z_prime;
  std::vector<Vector> eps;  // reparameterisation noise; empty in mean mode
};

struct TrainStepResult {
  LossReport report;
  StepSamples samples;
};

StepSamples draw_step_samples(TrainState& state, int64_t batch_size);

// The inputs a step actually trains on: mirrored images, replicated once per
// domain in exhaustive mode, and the matching source labels.
struct StepBatch {
  torch::Tensor x;
  std::vector<DomainLabel> labels;
};

StepBatch prepare_batch(const TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels,
                        const StepSamples& samples);

std::map<std::string, torch::Tensor> discriminator_terms(TrainState& state, const StepBatch& batch,
                                                         const StepSamples& samples);
std::map<std::string, torch::Tensor> generator_terms(TrainState& state, const StepBatch& batch,
                                                     const StepSamples& samples);

// One D update on L_D, then one update of E_c, E_z and G on L_G recomputed
// with the new D.
TrainStepResult apply_step(TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels,
                           const StepSamples& samples);
TrainStepResult train_step(TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels);

std::vector<int64_t> sample_batch_indices(const Dataset& data, int batch_size, Rng& rng);

void checkpoint_save(const TrainState& state, const std::string& path);
TrainState checkpoint_load(const std::string& path);

// Images for a fixed set of inputs: column 0 is the input, then one column
// per domain; `rows_per_input` independent samples per input.
std::vector<std::vector<torch::Tensor>> sample_grid(TrainState& state, const torch::Tensor& inputs, int rows_per_input,
                                                    std::uint64_t seed);

// Trains until state.train.iterations, writing losses.csv, checkpoints/ and
// samples/ under `out_dir`. Resumes from checkpoints/latest.bin when present.
void run_training(TrainState& state, const Dataset& data, const std::string& out_dir, std::ostream* log = nullptr);

}  // namespace gmmunit
