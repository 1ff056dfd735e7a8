#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmmunit/rng.hpp"

namespace gmmunit {

// Sizes of the four networks. Channel widths scale with `base_channels`
// (64 reproduces the reference table: 64/128/256 in the encoders, 512 at the
// bottom of the discriminator).
struct NetworkConfig {
  int image_size = 32;
  int base_channels = 64;
  int style_blocks = 1;  // C
  int attr_dim = 8;      // Z
  int num_domains = 3;   // width of the domain head
  bool reduced_depth = false;
  bool attention = false;
  bool attention_guidance = false;
  bool disentangled = true;
  int mapping_hidden = 256;
  double logvar_min = -10.0;
  double logvar_max = 10.0;

  int code_dim() const { return style_blocks * attr_dim; }
  int content_channels() const { return 4 * base_channels; }
  int content_blocks() const { return reduced_depth ? 3 : 4; }
  int disc_downsamplings() const { return reduced_depth ? 3 : 4; }
  int disc_output_size() const { return image_size >> disc_downsamplings(); }

  void validate() const;
};

struct AttributePosterior {
  torch::Tensor mean;    // [N, CZ]
  torch::Tensor logvar;  // [N, CZ]
};

struct GeneratorOutput {
  torch::Tensor raw;   // [N, 3, h, w] in [-1, 1]
  torch::Tensor mask;  // [N, 1, h, w] in [0, 1]; undefined without the attention head
};

struct DiscriminatorOutput {
  torch::Tensor rf_map;         // [N, 1, h/16, w/16] (h/8 for the reduced variant)
  torch::Tensor domain_logits;  // [N, n]
};

torch::Tensor instance_norm(const torch::Tensor& x, double eps = 1e-5);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// conv -> AdaIN -> ReLU -> conv -> AdaIN, plus the identity path. The affine
// parameters arrive with each call as [N, 4 * channels] (gamma1, beta1, gamma2, beta2).
class AdaInResidualBlockImpl : public torch::nn::Module {
 public:
  explicit AdaInResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& affine);
  int affine_size() const { return 4 * channels_; }

 private:
  int channels_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(AdaInResidualBlock);

// Normalises each sample over (C, H, W) with a per-channel affine map.
class LayerNorm2dImpl : public torch::nn::Module {
 public:
  explicit LayerNorm2dImpl(int channels, double eps = 1e-5);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  double eps_;
  torch::Tensor gamma_, beta_;
};
TORCH_MODULE(LayerNorm2d);

class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(const NetworkConfig& config, int in_channels = 3);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(ContentEncoder);

class AttributeEncoderImpl : public torch::nn::Module {
 public:
  explicit AttributeEncoderImpl(const NetworkConfig& config);
  AttributePosterior forward(const torch::Tensor& x);

 private:
  double logvar_min_, logvar_max_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear mean_head_{nullptr}, logvar_head_{nullptr};
};
TORCH_MODULE(AttributeEncoder);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const NetworkConfig& config);
  // `content` is the content code, or the image itself when the model is not
  // disentangled. `guidance` is the optional extra attention channel.
  GeneratorOutput forward(const torch::Tensor& content, const torch::Tensor& z,
                          const torch::Tensor& guidance = {});
  bool has_attention() const { return attention_; }

 private:
  bool disentangled_, attention_, guidance_;
  int code_dim_;
  torch::nn::Sequential mapping_{nullptr};
  ContentEncoder frontend_{nullptr};
  torch::nn::ModuleList blocks_;
  torch::nn::Conv2d up1_{nullptr}, up2_{nullptr}, out_{nullptr}, attention_conv_{nullptr};
  LayerNorm2d norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const NetworkConfig& config);
  DiscriminatorOutput forward(const torch::Tensor& x);

 private:
  int image_size_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d rf_head_{nullptr}, domain_head_{nullptr};
};
TORCH_MODULE(Discriminator);

// Fan-in scaled Gaussian initialisation (std = sqrt(2 / fan_in)) of every
// weight; biases zero, normalisation gains one.
void init_parameters(torch::nn::Module& module, std::uint64_t seed);

// The four networks of one model.
struct Networks {
  NetworkConfig config;
  ContentEncoder content{nullptr};
  AttributeEncoder attribute{nullptr};
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};

  Networks() = default;
  Networks(const NetworkConfig& config, std::uint64_t seed);

  void to(torch::Dtype dtype);
  torch::TensorOptions options() const;
  // Parameters updated by the generator step (E_c, E_z, G) in a fixed order.
  std::vector<torch::Tensor> generator_side_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
  // (module name, parameter name, tensor) for every parameter of the four networks.
  std::vector<std::tuple<std::string, std::string, torch::Tensor>> named_parameters() const;
};

void check_image_batch(const torch::Tensor& x, const char* where);

torch::Tensor encode_content(Networks& nets, const torch::Tensor& x);
AttributePosterior encode_attributes(Networks& nets, const torch::Tensor& x);

enum class AttributePointMode { mean, reparameterized };

torch::Tensor attribute_point(const AttributePosterior& p, AttributePointMode mode, Rng& rng);
GeneratorOutput generate(Networks& nets, const torch::Tensor& content, const torch::Tensor& z,
                         const torch::Tensor& guidance = {});
torch::Tensor compose_attention(const torch::Tensor& a, const torch::Tensor& b_raw, const torch::Tensor& mask);
DiscriminatorOutput discriminate(Networks& nets, const torch::Tensor& x);

// What the generator consumes for image `x`: E_c(x), or x itself when the
// model is not disentangled.
torch::Tensor content_of(Networks& nets, const torch::Tensor& x);
// G(content, z), composed with `source` through the attention mask when the
// head is enabled.
torch::Tensor translate(Networks& nets, const torch::Tensor& source, const torch::Tensor& content,
                        const torch::Tensor& z);

// Builds a [rows, dim] tensor from code vectors.
torch::Tensor codes_to_tensor(const std::vector<std::vector<double>>& codes, const torch::TensorOptions& options);
std::vector<std::vector<double>> tensor_to_codes(const torch::Tensor& codes);

}  // namespace gmmunit
