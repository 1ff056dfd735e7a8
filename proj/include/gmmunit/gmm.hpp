#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gmmunit/rng.hpp"

namespace gmmunit {

using Vector = std::vector<double>;

enum class GmmMode {
  categorical,  // one component per domain
  factorized,   // one block of the code per binary attribute
};

std::string_view to_string(GmmMode mode);
GmmMode parse_gmm_mode(std::string_view text);

// Binary attribute vector identifying a domain (categorical: one-hot) or an
// attribute combination (factorized).
struct DomainLabel {
  std::vector<std::uint8_t> bits;
  std::string name;

  bool operator==(const DomainLabel& other) const { return bits == other.bits; }
};

// Human-readable description of the attribute prior. In categorical mode
// `components` is the domain count K; in factorized mode it is the number of
// attributes and `weights` must be empty (labels are drawn uniformly from the
// combinations allowed by the exclusivity groups).
struct GmmSpec {
  GmmMode mode = GmmMode::categorical;
  int dim = 8;
  int components = 1;
  double radius = 1.0;
  std::vector<double> scales;
  std::vector<double> weights;
  std::vector<std::string> attributes;
  std::vector<std::vector<int>> groups;

  bool operator==(const GmmSpec&) const = default;
};

// Uniform weights, equal scales and generated attribute names when `names` is empty.
GmmSpec make_gmm_spec(GmmMode mode, int dim, int components, double radius = 1.0, double scale = 0.5,
                      std::vector<std::string> names = {});

std::string format_gmm_spec(const GmmSpec& spec);
GmmSpec parse_gmm_spec(std::string_view text);

struct FactorBlock {
  int offset = 0;
  int size = 0;
  Vector off_mean;
  Vector on_mean;
  double scale = 0.0;
};

struct AttributeGmm {
  GmmMode mode = GmmMode::categorical;
  int dim = 0;
  std::vector<Vector> means;
  std::vector<double> scales;
  std::vector<double> weights;
  std::vector<FactorBlock> blocks;
  std::vector<std::string> attributes;
  std::vector<std::vector<int>> groups;

  // Number of mixture components: K (categorical) or the number of valid
  // attribute combinations (factorized).
  int component_count() const;
  int label_width() const { return static_cast<int>(attributes.size()); }
  // All scales zero: the StarGAN-like deterministic ablation.
  bool deterministic() const;
};

AttributeGmm build_gmm(const GmmSpec& spec);
void validate(const AttributeGmm& gmm);

std::vector<Vector> build_simplex_means(int count, int dim, double radius);

double gmm_density(const Vector& z, const AttributeGmm& gmm);

// Component `k` is a domain index in categorical mode and an index into
// enumerate_labels() in factorized mode.
Vector sample_component(const AttributeGmm& gmm, int k, Rng& rng);
std::pair<int, Vector> sample_mixture(const AttributeGmm& gmm, Rng& rng);

// KL(N(m, diag(exp(logv))) || N(mu, sigma^2 I)).
double kl_diag_gaussian(const Vector& m, const Vector& logv, const Vector& mu, double sigma);

// Mean and per-coordinate scale of the component a label selects.
struct ComponentParams {
  Vector mean;
  Vector scale;
};

ComponentParams domain_component(const AttributeGmm& gmm, const DomainLabel& label);
Vector sample_gaussian(const ComponentParams& component, Rng& rng);
Vector sample_label(const AttributeGmm& gmm, const DomainLabel& label, Rng& rng);

struct Interpolation {
  Vector code;
  bool extrapolated = false;
};

Interpolation interpolate_codes(const Vector& a, const Vector& b, double t);

void validate_label(const AttributeGmm& gmm, const DomainLabel& label);
std::vector<DomainLabel> enumerate_labels(const AttributeGmm& gmm);
DomainLabel label_for_component(const AttributeGmm& gmm, int k);
int component_of(const AttributeGmm& gmm, const DomainLabel& label);
// Accepts a domain name, '+'-joined attribute names ("none" for all off) or a
// raw bit string such as "101".
DomainLabel parse_label(const AttributeGmm& gmm, std::string_view text);
std::string label_name(const AttributeGmm& gmm, const std::vector<std::uint8_t>& bits);

}  // namespace gmmunit
