#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmmunit/data.hpp"
#include "gmmunit/features.hpp"
#include "gmmunit/gmm.hpp"

namespace gmmunit {

// Feature vectors of a set of images, tagged with the extractor that made them.
struct FeatureSet {
  torch::Tensor features;  // [N, F] float64
  std::string extractor;
};

// Globally averaged last-layer activations, computed in chunks.
FeatureSet feature_set(FeatureExtractor& extractor, const torch::Tensor& images, int64_t chunk = 256);

// ||m_a - m_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^(1/2)) from sample moments
// (unbiased covariance). Throws when either set has fewer than two rows or
// the square root meets a clearly negative eigenvalue.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);
double frechet_from_moments(const torch::Tensor& mean_a, const torch::Tensor& cov_a, const torch::Tensor& mean_b,
                            const torch::Tensor& cov_b);

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;  // population std across inputs
  int64_t inputs = 0;
};

// Per input, the average squared embedding distance over all unordered pairs
// of its samples; summarised across inputs.
ScoreSummary diversity_from_embeddings(const std::vector<torch::Tensor>& per_input);
// samples[i] holds the S >= 2 images generated for input i as [S, 3, h, w].
ScoreSummary diversity_score(const std::vector<torch::Tensor>& samples, FeatureExtractor& extractor);

// Mean distance between the masked input and each masked sample. `region`
// is [h, w] or [1, h, w] in [0, 1].
double background_diversity(const torch::Tensor& input, const torch::Tensor& samples, const torch::Tensor& region,
                            FeatureExtractor& extractor);
// Complement of an attention mask thresholded at 0.5.
torch::Tensor background_region(const torch::Tensor& mask);

// Small convolutional domain classifier. It doubles as the default feature
// extractor for evaluation.
class ProbeNetImpl : public torch::nn::Module {
 public:
  ProbeNetImpl(int outputs, int width);
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ProbeNet);

class ProbeClassifier final : public FeatureExtractor {
 public:
  ProbeClassifier(GmmMode mode, std::vector<std::string> attributes, int image_size, int width = 16,
                  std::uint64_t seed = 0);

  std::string id() const override;
  std::vector<torch::Tensor> layers(const torch::Tensor& images) override;

  torch::Tensor logits(const torch::Tensor& images);
  std::vector<DomainLabel> predict(const torch::Tensor& images, int64_t chunk = 256);

  void save(const std::string& path) const;
  static ProbeClassifier load(const std::string& path);

  GmmMode mode;
  std::vector<std::string> attributes;
  int image_size;
  int width;
  double real_accuracy = -1.0;  // measured on held-out real images; -1 until trained
  ProbeNet net{nullptr};
};

struct ProbeTraining {
  int epochs = 4;
  int batch_size = 64;
  double lr = 1e-3;
  int width = 16;
  std::uint64_t seed = 0;
};

// Trains on the training split and records accuracy on the held-out split
// (the training split when nothing is held out).
ProbeClassifier train_probe(const Dataset& data, const ProbeTraining& options, std::ostream* log = nullptr);

// Fraction of images whose predicted label equals the target label. Throws on
// an empty batch.
double domain_accuracy(const torch::Tensor& images, const std::vector<DomainLabel>& targets, ProbeClassifier& probe);

struct LatentRow {
  std::string label;
  std::string source;  // "sampled" or "extracted"
  Vector code;
};

// CSV: label,source,z0,...,z{D-1}; values use shortest round-trip decimals.
void export_latents(const std::vector<LatentRow>& rows, const std::string& path);
std::vector<LatentRow> read_latents(const std::string& path);

struct MetricRow {
  std::string model;
  std::string target;
  std::string metric;
  double value = 0.0;
  double std = 0.0;
  std::string extractor;
  int64_t inputs = 0;
  int64_t samples = 0;
  std::uint64_t seed = 0;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> read_metrics_csv(const std::string& path);
std::string metrics_summary(const std::vector<MetricRow>& rows);

}  // namespace gmmunit
