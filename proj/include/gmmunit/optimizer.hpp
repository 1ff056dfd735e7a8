#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace gmmunit {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<torch::Tensor> first;
  std::vector<torch::Tensor> second;
  std::int64_t steps = 0;

  static AdamMoments zeros_like(const std::vector<torch::Tensor>& params);
};

struct StepResult {
  bool applied = false;
  std::string reason;
};

// Bias-corrected adaptive-moment update applied in place. An undefined
// gradient counts as zero. Any non-finite gradient rejects the whole step and
// leaves parameters and moments untouched.
StepResult optimizer_step(const std::vector<torch::Tensor>& params, const std::vector<torch::Tensor>& grads,
                          AdamMoments& moments, double lr, const AdamConfig& config = {});

// base_lr * 0.5^floor(iteration / half_every)
double lr_at(std::int64_t iteration, double base_lr = 1e-4, std::int64_t half_every = 200000);

}  // namespace gmmunit
