#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace gmmunit {

// Produces intermediate feature maps for perceptual comparisons. Scores
// computed with different extractors are not comparable; every report carries
// the extractor id.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  // One [N, C, H, W] tensor per layer.
  virtual std::vector<torch::Tensor> layers(const torch::Tensor& images) = 0;
};

// The pixels themselves as the only layer.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "identity"; }
  std::vector<torch::Tensor> layers(const torch::Tensor& images) override { return {images}; }
};

// Flattens each image into a vector whose squared Euclidean distances equal
// the LPIPS-style sum over layers of the spatially averaged squared difference
// between channel-normalised activations. Returns [N, F] in float64.
torch::Tensor embed(FeatureExtractor& extractor, const torch::Tensor& images);

}  // namespace gmmunit
