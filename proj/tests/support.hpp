#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gmmunit/data.hpp"
#include "gmmunit/rng.hpp"
#include "gmmunit/training.hpp"

namespace gmmunit::testing {

// Brute-force references written with plain loops over doubles.
namespace oracle {

std::vector<double> values(const torch::Tensor& t);

double l1(const torch::Tensor& a, const torch::Tensor& b);
double iso(const torch::Tensor& z, const torch::Tensor& z2, const torch::Tensor& a, const torch::Tensor& a2);
// Per-sample KL of N(m, e^logv) to N(mu, sigma^2), averaged over rows.
double kl(const torch::Tensor& m, const torch::Tensor& logv, const torch::Tensor& mu, const torch::Tensor& sigma);
double kl_scalar(const std::vector<double>& m, const std::vector<double>& logv, const std::vector<double>& mu,
                 double sigma);
// E_q[log q - log p] from `n` antithetic draws; returns {estimate, standard error}.
std::pair<double, double> kl_monte_carlo(const std::vector<double>& m, const std::vector<double>& logv,
                                         const std::vector<double>& mu, double sigma, int64_t n, std::uint64_t seed);
double domain_categorical(const torch::Tensor& logits, const torch::Tensor& targets);
double domain_multilabel(const torch::Tensor& logits, const torch::Tensor& targets);
double adv_discriminator(const torch::Tensor& real, const torch::Tensor& fake);
double adv_generator_saturating(const torch::Tensor& fake);
double adv_generator_nonsaturating(const torch::Tensor& fake);
// Mean squared difference of per-channel instance-normalised [N, C, H, W] maps.
double perceptual_identity(const torch::Tensor& a, const torch::Tensor& b, double eps = 1e-5);
// Pairwise Euclidean distances of a point list.
std::vector<double> pairwise_distances(const std::vector<std::vector<double>>& points);
double trapezoid(const std::function<double(double)>& f, double lo, double hi, int64_t intervals);

}  // namespace oracle

// A miniature model and prior for fast training tests.
struct TinySetup {
  NetworkConfig net;
  GmmSpec gmm;
  LossWeights weights;
  TrainConfig train;
};

TinySetup tiny_setup(int image_size = 16, int base_channels = 4, std::uint64_t seed = 7);

// In-memory folder-style dataset of random images, `per_domain` per domain.
Dataset random_dataset(int domains, int per_domain, int image_size, std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::string temp_dir(const std::string& name);

// Largest absolute elementwise difference (inf when shapes differ).
double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b);
bool bit_equal(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace gmmunit::testing
