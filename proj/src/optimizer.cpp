#include "gmmunit/optimizer.hpp"

#include <cmath>

#include "gmmunit/errors.hpp"

namespace gmmunit {

AdamMoments AdamMoments::zeros_like(const std::vector<torch::Tensor>& params) {
  AdamMoments m;
  for (const auto& p : params) {
    m.first.push_back(torch::zeros_like(p).detach());
    m.second.push_back(torch::zeros_like(p).detach());
  }
  return m;
}

StepResult optimizer_step(const std::vector<torch::Tensor>& params, const std::vector<torch::Tensor>& grads,
                          AdamMoments& moments, double lr, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != moments.first.size() ||
      params.size() != moments.second.size()) {
    throw ShapeError("optimizer_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (moments.first[i].sizes() != params[i].sizes() || moments.second[i].sizes() != params[i].sizes() ||
        (grads[i].defined() && grads[i].sizes() != params[i].sizes())) {
      throw ShapeError("optimizer_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  for (const auto& g : grads) {
    if (g.defined() && !torch::isfinite(g).all().item<bool>()) return {false, "non-finite gradient"};
  }

  torch::NoGradGuard no_grad;
  const std::int64_t t = moments.steps + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = moments.first[i];
    auto& v = moments.second[i];
    m.mul_(config.beta1);
    v.mul_(config.beta2);
    if (grads[i].defined()) {
      m.add_(grads[i], 1.0 - config.beta1);
      v.addcmul_(grads[i], grads[i], 1.0 - config.beta2);
    }
    const auto denom = (v / correction2).sqrt_().add_(config.eps);
    params[i].sub_(lr * (m / correction1) / denom);
  }
  moments.steps = t;
  return {true, {}};
}

double lr_at(std::int64_t iteration, double base_lr, std::int64_t half_every) {
  if (iteration < 0) throw ArgumentError("lr_at: negative iteration");
  if (half_every <= 0) throw ArgumentError("lr_at: non-positive halving period");
  return base_lr * std::pow(0.5, static_cast<double>(iteration / half_every));
}

}  // namespace gmmunit
