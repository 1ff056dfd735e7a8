#include "gmmunit/features.hpp"

#include <cmath>

namespace gmmunit {

torch::Tensor embed(FeatureExtractor& extractor, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (const auto& layer : extractor.layers(images)) {
    const auto f = layer.detach().to(torch::kFloat64);
    const auto norm = torch::sqrt(f.pow(2).sum(1, /*keepdim=*/true)) + 1e-10;
    const double spatial = static_cast<double>(f.size(2) * f.size(3));
    parts.push_back((f / norm / std::sqrt(spatial)).flatten(1));
  }
  return torch::cat(parts, 1);
}

}  // namespace gmmunit
