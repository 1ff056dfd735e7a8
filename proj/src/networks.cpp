#include "gmmunit/networks.hpp"

#include <cmath>

#include "gmmunit/errors.hpp"

namespace gmmunit {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

void NetworkConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0) throw ConfigError("image size must be a positive multiple of 16");
  if (base_channels < 1 || style_blocks < 1 || attr_dim < 1 || num_domains < 1 || mapping_hidden < 1) {
    throw ConfigError("network sizes must be positive");
  }
  if (!(logvar_min < logvar_max)) throw ConfigError("logvar clamp range is empty");
}

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
  const auto mean = x.mean({2, 3}, /*keepdim=*/true);
  const auto var = (x - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  return (x - mean) / torch::sqrt(var + eps);
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  conv1_ = register_module("conv1", conv(channels, channels, 3, 1, 1));
  conv2_ = register_module("conv2", conv(channels, channels, 3, 1, 1));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(instance_norm(conv1_->forward(x)));
  h = instance_norm(conv2_->forward(h));
  return x + h;
}

AdaInResidualBlockImpl::AdaInResidualBlockImpl(int channels) : channels_(channels) {
  conv1_ = register_module("conv1", conv(channels, channels, 3, 1, 1));
  conv2_ = register_module("conv2", conv(channels, channels, 3, 1, 1));
}

torch::Tensor AdaInResidualBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& affine) {
  const auto parts = affine.split(channels_, 1);
  auto adain = [](const torch::Tensor& h, const torch::Tensor& gamma, const torch::Tensor& beta) {
    return instance_norm(h) * (1.0 + gamma.unsqueeze(-1).unsqueeze(-1)) + beta.unsqueeze(-1).unsqueeze(-1);
  };
  auto h = torch::relu(adain(conv1_->forward(x), parts[0], parts[1]));
  h = adain(conv2_->forward(h), parts[2], parts[3]);
  return x + h;
}

LayerNorm2dImpl::LayerNorm2dImpl(int channels, double eps) : eps_(eps) {
  gamma_ = register_parameter("gamma", torch::ones({channels}));
  beta_ = register_parameter("beta", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
  const auto mean = x.mean({1, 2, 3}, /*keepdim=*/true);
  const auto var = (x - mean).pow(2).mean({1, 2, 3}, /*keepdim=*/true);
  const auto normed = (x - mean) / torch::sqrt(var + eps_);
  return normed * gamma_.view({1, -1, 1, 1}) + beta_.view({1, -1, 1, 1});
}

ContentEncoderImpl::ContentEncoderImpl(const NetworkConfig& config, int in_channels) {
  const int ch = config.base_channels;
  stem_ = register_module("stem", conv(in_channels, ch, 7, 1, 3));
  down1_ = register_module("down1", conv(ch, 2 * ch, 4, 2, 1));
  down2_ = register_module("down2", conv(2 * ch, 4 * ch, 4, 2, 1));
  for (int i = 0; i < config.content_blocks(); ++i) blocks_->push_back(ResidualBlock(4 * ch));
  register_module("blocks", blocks_);
}

torch::Tensor ContentEncoderImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(instance_norm(stem_->forward(x)));
  h = torch::relu(instance_norm(down1_->forward(h)));
  h = torch::relu(instance_norm(down2_->forward(h)));
  for (const auto& block : *blocks_) h = block->as<ResidualBlock>()->forward(h);
  return h;
}

AttributeEncoderImpl::AttributeEncoderImpl(const NetworkConfig& config)
    : logvar_min_(config.logvar_min), logvar_max_(config.logvar_max) {
  const int ch = config.base_channels;
  features_ = register_module(
      "features", nn::Sequential(conv(3, ch, 7, 1, 3), nn::ReLU(), conv(ch, 2 * ch, 4, 2, 1), nn::ReLU(),
                                 conv(2 * ch, 4 * ch, 4, 2, 1), nn::ReLU(), conv(4 * ch, 4 * ch, 4, 2, 1),
                                 nn::ReLU(), conv(4 * ch, 4 * ch, 4, 2, 1), nn::ReLU()));
  mean_head_ = register_module("mean_head", nn::Linear(4 * ch, config.code_dim()));
  logvar_head_ = register_module("logvar_head", nn::Linear(4 * ch, config.code_dim()));
}

AttributePosterior AttributeEncoderImpl::forward(const torch::Tensor& x) {
  const auto pooled = features_->forward(x).mean({2, 3});
  return {mean_head_->forward(pooled), logvar_head_->forward(pooled).clamp(logvar_min_, logvar_max_)};
}

GeneratorImpl::GeneratorImpl(const NetworkConfig& config)
    : disentangled_(config.disentangled),
      attention_(config.attention),
      guidance_(config.attention_guidance),
      code_dim_(config.code_dim()) {
  const int ch = config.base_channels;
  const int width = 4 * ch;
  constexpr int kBlocks = 4;
  if (disentangled_) {
    for (int i = 0; i < kBlocks; ++i) blocks_->push_back(AdaInResidualBlock(width));
    mapping_ = register_module("mapping", nn::Sequential(nn::Linear(code_dim_, config.mapping_hidden), nn::ReLU(),
                                                         nn::Linear(config.mapping_hidden, kBlocks * 4 * width)));
  } else {
    // The image and the tiled attribute code enter through the generator's own encoder.
    frontend_ = register_module("frontend", ContentEncoder(config, 3 + code_dim_));
    for (int i = 0; i < kBlocks; ++i) blocks_->push_back(ResidualBlock(width));
  }
  register_module("blocks", blocks_);
  up1_ = register_module("up1", conv(width, 2 * ch, 5, 1, 2));
  norm1_ = register_module("norm1", LayerNorm2d(2 * ch));
  up2_ = register_module("up2", conv(2 * ch, ch, 5, 1, 2));
  norm2_ = register_module("norm2", LayerNorm2d(ch));
  out_ = register_module("out", conv(ch, 3, 7, 1, 3));
  if (attention_) attention_conv_ = register_module("attention", conv(ch + (guidance_ ? 1 : 0), 1, 7, 1, 3));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& content, const torch::Tensor& z,
                                       const torch::Tensor& guidance) {
  if (content.size(0) != z.size(0)) throw ArgumentError("generate: content and code batch sizes differ");
  if (z.dim() != 2 || z.size(1) != code_dim_) throw ArgumentError("generate: attribute code has the wrong length");
  torch::Tensor h;
  if (disentangled_) {
    const auto affine = mapping_->forward(z).chunk(static_cast<int64_t>(blocks_->size()), 1);
    h = content;
    for (std::size_t i = 0; i < blocks_->size(); ++i) {
      h = blocks_[i]->as<AdaInResidualBlock>()->forward(h, affine[i]);
    }
  } else {
    const auto tiled = z.unsqueeze(-1).unsqueeze(-1).expand({z.size(0), z.size(1), content.size(2), content.size(3)});
    h = frontend_->forward(torch::cat({content, tiled}, 1));
    for (const auto& block : *blocks_) h = block->as<ResidualBlock>()->forward(h);
  }
  h = torch::relu(norm1_->forward(up1_->forward(upsample2x(h))));
  h = torch::relu(norm2_->forward(up2_->forward(upsample2x(h))));
  GeneratorOutput out;
  out.raw = torch::tanh(out_->forward(h));
  if (attention_) {
    auto att_in = h;
    if (guidance_) {
      const auto g = guidance.defined() ? guidance : torch::zeros({h.size(0), 1, h.size(2), h.size(3)}, h.options());
      att_in = torch::cat({h, g}, 1);
    }
    out.mask = torch::sigmoid(attention_conv_->forward(att_in));
  }
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const NetworkConfig& config) : image_size_(config.image_size) {
  const int ch = config.base_channels;
  trunk_ = nn::Sequential();
  int in = 3;
  int out = ch;
  for (int i = 0; i < config.disc_downsamplings(); ++i) {
    trunk_->push_back(conv(in, out, 4, 2, 1));
    trunk_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = out;
    out *= 2;
  }
  register_module("trunk", trunk_);
  rf_head_ = register_module("rf_head", conv(in, 1, 1, 1, 0));
  domain_head_ = register_module("domain_head", conv(in, config.num_domains, config.disc_output_size(), 1, 0));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.size(2) != image_size_ || x.size(3) != image_size_) {
    throw ShapeError("discriminate: expected " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                     " images");
  }
  const auto h = trunk_->forward(x);
  return {rf_head_->forward(h), domain_head_->forward(h).flatten(1)};
}

void init_parameters(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  Rng rng(seed);
  for (auto& item : module.named_parameters()) {
    auto& p = item.value();
    const auto& name = item.key();
    if (p.dim() >= 2) {
      const double fan_in = static_cast<double>(p.numel() / p.size(0));
      const double std = std::sqrt(2.0 / fan_in);
      auto values = torch::empty({p.numel()}, torch::kFloat64);
      auto* data = values.data_ptr<double>();
      for (int64_t i = 0; i < values.numel(); ++i) data[i] = std * rng.normal();
      p.copy_(values.view(p.sizes()));
    } else if (name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0) {
      p.fill_(1.0);
    } else {
      p.zero_();
    }
  }
}

Networks::Networks(const NetworkConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  content = ContentEncoder(config);
  attribute = AttributeEncoder(config);
  generator = Generator(config);
  discriminator = Discriminator(config);
  init_parameters(*content, derive_seed(seed, 1));
  init_parameters(*attribute, derive_seed(seed, 2));
  init_parameters(*generator, derive_seed(seed, 3));
  init_parameters(*discriminator, derive_seed(seed, 4));
}

void Networks::to(torch::Dtype dtype) {
  content->to(dtype);
  attribute->to(dtype);
  generator->to(dtype);
  discriminator->to(dtype);
}

torch::TensorOptions Networks::options() const {
  return torch::TensorOptions().dtype(generator->parameters().front().scalar_type());
}

std::vector<torch::Tensor> Networks::generator_side_parameters() const {
  std::vector<torch::Tensor> params;
  if (config.disentangled) params = content->parameters();
  for (const auto& m : {attribute->parameters(), generator->parameters()}) {
    params.insert(params.end(), m.begin(), m.end());
  }
  return params;
}

std::vector<torch::Tensor> Networks::discriminator_parameters() const { return discriminator->parameters(); }

std::vector<std::tuple<std::string, std::string, torch::Tensor>> Networks::named_parameters() const {
  std::vector<std::tuple<std::string, std::string, torch::Tensor>> out;
  auto add = [&out](const std::string& module, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters()) out.emplace_back(module, item.key(), item.value());
  };
  add("content_encoder", *content);
  add("attribute_encoder", *attribute);
  add("generator", *generator);
  add("discriminator", *discriminator);
  return out;
}

void check_image_batch(const torch::Tensor& x, const char* where) {
  if (x.dim() != 4 || x.size(0) < 1 || x.size(1) != 3) {
    throw ShapeError(std::string(where) + ": expected an [N, 3, h, w] image batch");
  }
  if (x.size(2) % 16 != 0 || x.size(3) % 16 != 0 || x.size(2) == 0 || x.size(3) == 0) {
    throw ShapeError(std::string(where) + ": image height and width must be multiples of 16");
  }
}

torch::Tensor encode_content(Networks& nets, const torch::Tensor& x) {
  check_image_batch(x, "encode_content");
  return nets.content->forward(x);
}

AttributePosterior encode_attributes(Networks& nets, const torch::Tensor& x) {
  check_image_batch(x, "encode_attributes");
  return nets.attribute->forward(x);
}

torch::Tensor attribute_point(const AttributePosterior& p, AttributePointMode mode, Rng& rng) {
  if (mode == AttributePointMode::mean) return p.mean;
  auto eps = torch::empty({p.mean.numel()}, torch::kFloat64);
  auto* data = eps.data_ptr<double>();
  for (int64_t i = 0; i < eps.numel(); ++i) data[i] = rng.normal();
  eps = eps.view(p.mean.sizes()).to(p.mean.scalar_type());
  return p.mean + torch::exp(0.5 * p.logvar) * eps;
}

GeneratorOutput generate(Networks& nets, const torch::Tensor& content, const torch::Tensor& z,
                         const torch::Tensor& guidance) {
  return nets.generator->forward(content, z, guidance);
}

torch::Tensor compose_attention(const torch::Tensor& a, const torch::Tensor& b_raw, const torch::Tensor& mask) {
  if (a.sizes() != b_raw.sizes()) throw ArgumentError("compose_attention: image shapes differ");
  if (mask.dim() != 4 || mask.size(0) != a.size(0) || mask.size(1) != 1 || mask.size(2) != a.size(2) ||
      mask.size(3) != a.size(3)) {
    throw ArgumentError("compose_attention: mask must be [N, 1, h, w]");
  }
  return b_raw * mask + a * (1.0 - mask);
}

DiscriminatorOutput discriminate(Networks& nets, const torch::Tensor& x) {
  check_image_batch(x, "discriminate");
  return nets.discriminator->forward(x);
}

torch::Tensor content_of(Networks& nets, const torch::Tensor& x) {
  return nets.config.disentangled ? encode_content(nets, x) : x;
}

torch::Tensor translate(Networks& nets, const torch::Tensor& source, const torch::Tensor& content,
                        const torch::Tensor& z) {
  auto out = generate(nets, content, z);
  return out.mask.defined() ? compose_attention(source, out.raw, out.mask) : out.raw;
}

torch::Tensor codes_to_tensor(const std::vector<std::vector<double>>& codes, const torch::TensorOptions& options) {
  if (codes.empty()) throw ArgumentError("codes_to_tensor: no codes");
  const auto dim = static_cast<int64_t>(codes.front().size());
  auto out = torch::empty({static_cast<int64_t>(codes.size()), dim}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (static_cast<int64_t>(codes[i].size()) != dim) throw ArgumentError("codes_to_tensor: ragged codes");
    for (int64_t j = 0; j < dim; ++j) acc[i][j] = codes[i][j];
  }
  return out.to(options.dtype());
}

std::vector<std::vector<double>> tensor_to_codes(const torch::Tensor& codes) {
  const auto t = codes.detach().to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> out(t.size(0), std::vector<double>(t.size(1)));
  auto acc = t.accessor<double, 2>();
  for (int64_t i = 0; i < t.size(0); ++i) {
    for (int64_t j = 0; j < t.size(1); ++j) out[i][j] = acc[i][j];
  }
  return out;
}

}  // namespace gmmunit
