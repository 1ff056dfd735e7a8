#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "gmmunit/errors.hpp"
#include "gmmunit/features.hpp"
#include "gmmunit/gmm.hpp"
#include "gmmunit/networks.hpp"

namespace gmmunit {

// Term weights of the generator objective. c_rec and a_rec carry an implicit
// unit weight; ablations switch them off by setting zero.
struct LossWeights {
  double s_rec = 10.0;
  double cyc = 10.0;
  double kl = 0.1;
  double iso = 0.1;
  double perc = 0.0;
  double c_rec = 1.0;
  double a_rec = 1.0;

  void validate() const;
};

namespace term {
inline constexpr const char* adv_d = "adv_d";
inline constexpr const char* dom_d = "dom_d";
inline constexpr const char* adv_g = "adv_g";
inline constexpr const char* s_rec = "s_rec";
inline constexpr const char* c_rec = "c_rec";
inline constexpr const char* a_rec = "a_rec";
inline constexpr const char* cyc = "cyc";
inline constexpr const char* kl = "kl";
inline constexpr const char* iso = "iso";
inline constexpr const char* dom_g = "dom_g";
inline constexpr const char* perc = "perc";
}  // namespace term

// Column order of the loss log.
const std::vector<std::string>& term_names();

enum class AdvSide { discriminator, generator };
enum class AdvFlavor { saturating, nonsaturating };
enum class DomainLossMode { categorical, multilabel };

std::string_view to_string(AdvFlavor flavor);
AdvFlavor parse_adv_flavor(std::string_view text);

// Mean absolute difference; all four reconstruction terms share it.
torch::Tensor loss_l1(const torch::Tensor& a, const torch::Tensor& b);
inline torch::Tensor loss_self_rec(const torch::Tensor& x, const torch::Tensor& x_hat) { return loss_l1(x_hat, x); }
inline torch::Tensor loss_content_rec(const torch::Tensor& c, const torch::Tensor& c_rec) { return loss_l1(c_rec, c); }
inline torch::Tensor loss_attr_rec(const torch::Tensor& z, const torch::Tensor& z_rec) { return loss_l1(z_rec, z); }
inline torch::Tensor loss_cycle(const torch::Tensor& x, const torch::Tensor& x_cyc) { return loss_l1(x_cyc, x); }

// Batch mean of | ||a - a'||_1 - ||z - z'||_1 | over [N, D] codes.
torch::Tensor loss_iso(const torch::Tensor& z, const torch::Tensor& z_prime, const torch::Tensor& a,
                       const torch::Tensor& a_prime);

// Batch mean of the closed-form KL to per-sample diagonal Gaussians given as
// [N, D] means and scales.
torch::Tensor loss_kl(const AttributePosterior& posterior, const torch::Tensor& mean, const torch::Tensor& scale);
torch::Tensor loss_kl(const AttributePosterior& posterior, const std::vector<DomainLabel>& labels,
                      const AttributeGmm& gmm);

// `targets` holds the label bits as [N, n].
torch::Tensor loss_domain(const torch::Tensor& logits, const torch::Tensor& targets, DomainLossMode mode);
torch::Tensor loss_domain(const torch::Tensor& logits, const std::vector<DomainLabel>& labels, DomainLossMode mode);
torch::Tensor labels_to_tensor(const std::vector<DomainLabel>& labels, const torch::TensorOptions& options);

// `rf_real` is ignored on the generator side.
torch::Tensor loss_adv(const torch::Tensor& rf_real, const torch::Tensor& rf_fake, AdvSide side, AdvFlavor flavor);

// Mean over layers of the mean squared difference between instance-normalised
// features. Throws ConfigError when no extractor is configured.
torch::Tensor loss_perceptual(const torch::Tensor& x_a, const torch::Tensor& x_b, FeatureExtractor* extractor);

template <class T>
struct Objectives {
  T d;
  T g;
};

namespace detail {

// Neumaier compensated sum so that the double route returns the correctly
// rounded total independent of term order.
inline double compensated_sum(const std::vector<double>& values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

}  // namespace detail

// L_D = L_GAN + L_dom^D and
// L_G = L_GAN + l_s L_s/rec + L_c/rec + L_a/rec + l_cyc L_cyc + l_KL L_KL + l_iso L_iso + L_dom^G (+ l_perc L_perc).
// Terms whose weight is zero may be absent and contribute exactly 0.
template <class T>
Objectives<T> total_objectives(const std::map<std::string, T>& terms, const LossWeights& w) {
  auto get = [&terms](const char* name) -> const T& {
    const auto it = terms.find(name);
    if (it == terms.end()) throw ConfigError(std::string("total_objectives: missing term '") + name + "'");
    return it->second;
  };
  const std::vector<std::pair<const char*, double>> weighted = {
      {term::s_rec, w.s_rec}, {term::c_rec, w.c_rec}, {term::a_rec, w.a_rec}, {term::cyc, w.cyc},
      {term::kl, w.kl},       {term::iso, w.iso},     {term::perc, w.perc}};
  if constexpr (std::is_same_v<T, double>) {
    std::vector<double> g = {get(term::adv_g), get(term::dom_g)};
    for (const auto& [name, weight] : weighted) {
      if (weight != 0.0) g.push_back(weight * get(name));
    }
    return {detail::compensated_sum({get(term::adv_d), get(term::dom_d)}), detail::compensated_sum(g)};
  } else {
    T d = get(term::adv_d) + get(term::dom_d);
    T g = get(term::adv_g) + get(term::dom_g);
    for (const auto& [name, weight] : weighted) {
      if (weight != 0.0) g = g + weight * get(name);
    }
    return {d, g};
  }
}

// Generator-side objective only (the D terms are not needed).
template <class T>
T total_generator_objective(std::map<std::string, T> terms, const LossWeights& w) {
  if (!terms.count(term::adv_d)) terms.emplace(term::adv_d, terms.at(term::adv_g) * 0.0);
  if (!terms.count(term::dom_d)) terms.emplace(term::dom_d, terms.at(term::adv_g) * 0.0);
  return total_objectives(terms, w).g;
}

// One row of the loss log.
struct LossReport {
  std::int64_t iteration = 0;
  std::map<std::string, double> terms;
  double loss_d = 0.0;
  double loss_g = 0.0;
  bool d_applied = false;
  bool g_applied = false;
  std::string status = "ok";

  static std::string csv_header();
  std::string csv_row() const;
  static LossReport parse_csv_row(const std::string& row);
};

}  // namespace gmmunit
