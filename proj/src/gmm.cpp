#include "gmmunit/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "gmmunit/errors.hpp"
#include "gmmunit/kv.hpp"

namespace gmmunit {

namespace {

constexpr double kWeightTolerance = 1e-9;
constexpr int kMaxFactorizedAttributes = 20;

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double log_sum_exp(const std::vector<double>& terms) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double t : terms) peak = std::max(peak, t);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - peak);
  return peak + std::log(acc);
}

double log_normal_diag(const Vector& z, const Vector& mean, const Vector& scale) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = (z[i] - mean[i]) / scale[i];
    acc += -0.5 * d * d - std::log(scale[i]);
  }
  return acc - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

std::vector<std::uint8_t> bits_of_mask(std::uint64_t mask, int width) {
  std::vector<std::uint8_t> bits(width);
  for (int i = 0; i < width; ++i) bits[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
  return bits;
}

bool groups_satisfied(const std::vector<std::vector<int>>& groups, const std::vector<std::uint8_t>& bits) {
  for (const auto& group : groups) {
    int on = 0;
    for (int a : group) on += bits[a];
    if (on != 1) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(GmmMode mode) {
  return mode == GmmMode::categorical ? "categorical" : "factorized";
}

GmmMode parse_gmm_mode(std::string_view text) {
  if (text == "categorical") return GmmMode::categorical;
  if (text == "factorized") return GmmMode::factorized;
  throw ConfigError("unknown gmm mode '" + std::string(text) + "'");
}

GmmSpec make_gmm_spec(GmmMode mode, int dim, int components, double radius, double scale,
                      std::vector<std::string> names) {
  GmmSpec spec;
  spec.mode = mode;
  spec.dim = dim;
  spec.components = components;
  spec.radius = radius;
  spec.scales.assign(components, scale);
  if (mode == GmmMode::categorical) spec.weights.assign(components, 1.0 / components);
  if (names.empty()) {
    for (int k = 0; k < components; ++k) {
      names.push_back((mode == GmmMode::categorical ? "domain" : "attr") + std::to_string(k));
    }
  }
  spec.attributes = std::move(names);
  return spec;
}

std::string format_gmm_spec(const GmmSpec& spec) {
  KeyValueDoc doc;
  doc.set("mode", std::string(to_string(spec.mode)));
  doc.set("dim", std::to_string(spec.dim));
  doc.set("components", std::to_string(spec.components));
  doc.set("radius", format_double(spec.radius));
  doc.set("scales", format_doubles(spec.scales));
  doc.set("weights", format_doubles(spec.weights));
  doc.set("attributes", join(spec.attributes, ","));
  std::vector<std::string> groups;
  for (const auto& g : spec.groups) {
    std::vector<std::string> idx;
    for (int a : g) idx.push_back(std::to_string(a));
    groups.push_back(join(idx, ","));
  }
  doc.set("groups", join(groups, ";"));
  return doc.format();
}

GmmSpec parse_gmm_spec(std::string_view text) {
  const auto doc = KeyValueDoc::parse(text);
  for (const char* key : {"mode", "dim", "components", "radius", "scales"}) {
    if (!doc.has(key)) throw ConfigError(std::string("gmm spec: missing key '") + key + "'");
  }
  GmmSpec spec;
  spec.mode = parse_gmm_mode(*doc.get("mode"));
  spec.dim = static_cast<int>(doc.get_int("dim", 0));
  spec.components = static_cast<int>(doc.get_int("components", 0));
  spec.radius = doc.get_double("radius", 0.0);
  spec.scales = parse_doubles(*doc.get("scales"));
  spec.weights = parse_doubles(doc.get_string("weights", ""));
  const auto attrs = doc.get_string("attributes", "");
  if (!attrs.empty()) spec.attributes = split(attrs, ',');
  const auto groups = doc.get_string("groups", "");
  if (!groups.empty()) {
    for (const auto& g : split(groups, ';')) {
      std::vector<int> members;
      for (const auto& a : split(g, ',')) members.push_back(static_cast<int>(parse_int(a)));
      spec.groups.push_back(std::move(members));
    }
  }
  return spec;
}

int AttributeGmm::component_count() const {
  if (mode == GmmMode::categorical) return static_cast<int>(means.size());
  return static_cast<int>(enumerate_labels(*this).size());
}

bool AttributeGmm::deterministic() const {
  return !scales.empty() && std::all_of(scales.begin(), scales.end(), [](double s) { return s == 0.0; });
}

std::vector<Vector> build_simplex_means(int count, int dim, double radius) {
  if (count < 1 || dim < 1) throw ArgumentError("simplex: count and dim must be positive");
  if (count > dim + 1) {
    throw DimensionError("simplex: " + std::to_string(count) + " vertices do not fit in dimension " +
                         std::to_string(dim));
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ArgumentError("simplex: radius must be positive");

  std::vector<Vector> means(count, Vector(dim, 0.0));
  if (count == 1) return means;
  // Coordinates of the centred standard-basis vertices in the Helmert basis of
  // the sum-zero subspace; each has norm sqrt((K-1)/K) before rescaling.
  const double k = static_cast<double>(count);
  const double rescale = radius * std::sqrt(k / (k - 1.0));
  for (int j = 1; j < count; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) means[i][j - 1] = rescale / norm;
    means[j][j - 1] = -rescale * j / norm;
  }
  return means;
}

AttributeGmm build_gmm(const GmmSpec& spec) {
  if (spec.dim < 1) throw ArgumentError("gmm: dim must be positive");
  if (spec.components < 1) throw ArgumentError("gmm: component count must be positive");
  if (static_cast<int>(spec.scales.size()) != spec.components) {
    throw ArgumentError("gmm: expected one scale per component");
  }
  AttributeGmm gmm;
  gmm.mode = spec.mode;
  gmm.dim = spec.dim;
  gmm.scales = spec.scales;
  gmm.attributes = spec.attributes;
  if (gmm.attributes.empty()) gmm.attributes = make_gmm_spec(spec.mode, spec.dim, spec.components).attributes;
  if (static_cast<int>(gmm.attributes.size()) != spec.components) {
    throw ArgumentError("gmm: expected one attribute name per component");
  }
  gmm.groups = spec.groups;

  if (spec.mode == GmmMode::categorical) {
    if (!spec.groups.empty()) throw ArgumentError("gmm: exclusivity groups require factorized mode");
    gmm.weights = spec.weights.empty() ? Vector(spec.components, 1.0 / spec.components) : spec.weights;
    if (static_cast<int>(gmm.weights.size()) != spec.components) {
      throw ArgumentError("gmm: expected one weight per component");
    }
    gmm.means = build_simplex_means(spec.components, spec.dim, spec.radius);
  } else {
    if (!spec.weights.empty()) throw ArgumentError("gmm: factorized mode takes no mixture weights");
    if (spec.components > kMaxFactorizedAttributes) throw ArgumentError("gmm: too many attributes");
    if (spec.dim % spec.components != 0) {
      throw DimensionError("gmm: code dimension " + std::to_string(spec.dim) + " is not divisible into " +
                           std::to_string(spec.components) + " attribute blocks");
    }
    if (!(spec.radius > 0.0)) throw ArgumentError("gmm: radius must be positive");
    const int size = spec.dim / spec.components;
    const double coord = spec.radius / std::sqrt(static_cast<double>(size));
    for (int a = 0; a < spec.components; ++a) {
      FactorBlock block;
      block.offset = a * size;
      block.size = size;
      block.off_mean.assign(size, -coord);
      block.on_mean.assign(size, coord);
      block.scale = spec.scales[a];
      gmm.blocks.push_back(std::move(block));
    }
  }
  validate(gmm);
  return gmm;
}

void validate(const AttributeGmm& gmm) {
  for (const auto& name : gmm.attributes) {
    if (name.empty() || name.find_first_of(",;+= \t\n") != std::string::npos) {
      throw ArgumentError("gmm: invalid attribute name '" + name + "'");
    }
  }
  bool any_zero = false;
  bool any_positive = false;
  for (double s : gmm.scales) {
    if (!std::isfinite(s) || s < 0.0) throw ArgumentError("gmm: scales must be finite and non-negative");
    (s == 0.0 ? any_zero : any_positive) = true;
  }
  if (any_zero && any_positive) {
    throw ArgumentError("gmm: zero scales are only legal for the deterministic ablation (all scales zero)");
  }
  if (gmm.mode == GmmMode::categorical) {
    double total = 0.0;
    for (double w : gmm.weights) {
      if (!(w >= 0.0)) throw ArgumentError("gmm: weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > kWeightTolerance) throw ArgumentError("gmm: weights must sum to 1");
  } else {
    std::set<int> seen;
    for (const auto& group : gmm.groups) {
      if (group.empty()) throw ArgumentError("gmm: empty exclusivity group");
      for (int a : group) {
        if (a < 0 || a >= gmm.label_width()) throw ArgumentError("gmm: group member out of range");
        if (!seen.insert(a).second) throw ArgumentError("gmm: attribute listed in two groups");
      }
    }
  }
}

double gmm_density(const Vector& z, const AttributeGmm& gmm) {
  if (static_cast<int>(z.size()) != gmm.dim) throw ArgumentError("gmm_density: dimension mismatch");
  if (std::any_of(gmm.scales.begin(), gmm.scales.end(), [](double s) { return s == 0.0; })) {
    throw UnsupportedError("gmm_density: the deterministic ablation has no density");
  }
  std::vector<double> terms;
  if (gmm.mode == GmmMode::categorical) {
    for (std::size_t k = 0; k < gmm.means.size(); ++k) {
      if (gmm.weights[k] == 0.0) continue;
      const Vector scale(gmm.dim, gmm.scales[k]);
      terms.push_back(std::log(gmm.weights[k]) + log_normal_diag(z, gmm.means[k], scale));
    }
  } else {
    const auto labels = enumerate_labels(gmm);
    const double log_w = -std::log(static_cast<double>(labels.size()));
    for (const auto& label : labels) {
      const auto c = domain_component(gmm, label);
      terms.push_back(log_w + log_normal_diag(z, c.mean, c.scale));
    }
  }
  return std::exp(log_sum_exp(terms));
}

Vector sample_gaussian(const ComponentParams& component, Rng& rng) {
  Vector out(component.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double eps = rng.normal();
    out[i] = component.scale[i] == 0.0 ? component.mean[i] : component.mean[i] + component.scale[i] * eps;
  }
  return out;
}

Vector sample_component(const AttributeGmm& gmm, int k, Rng& rng) {
  return sample_gaussian(domain_component(gmm, label_for_component(gmm, k)), rng);
}

Vector sample_label(const AttributeGmm& gmm, const DomainLabel& label, Rng& rng) {
  return sample_gaussian(domain_component(gmm, label), rng);
}

std::pair<int, Vector> sample_mixture(const AttributeGmm& gmm, Rng& rng) {
  const int count = gmm.component_count();
  int k = 0;
  if (count > 1) {
    if (gmm.mode == GmmMode::categorical) {
      const double u = rng.uniform();
      double cumulative = 0.0;
      k = -1;
      for (int i = 0; i < count; ++i) {
        cumulative += gmm.weights[i];
        if (u < cumulative && gmm.weights[i] > 0.0) {
          k = i;
          break;
        }
      }
      if (k < 0) {
        // u landed in the rounding slack above the cumulative sum.
        for (int i = count - 1; i >= 0; --i) {
          if (gmm.weights[i] > 0.0) {
            k = i;
            break;
          }
        }
      }
    } else {
      k = static_cast<int>(rng.index(static_cast<std::size_t>(count)));
    }
  }
  return {k, sample_component(gmm, k, rng)};
}

double kl_diag_gaussian(const Vector& m, const Vector& logv, const Vector& mu, double sigma) {
  if (m.size() != logv.size() || m.size() != mu.size()) throw ArgumentError("kl: length mismatch");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("kl: sigma must be positive");
  if (!all_finite(m) || !all_finite(logv) || !all_finite(mu)) throw ArgumentError("kl: non-finite input");
  const double var = sigma * sigma;
  const double log_var = std::log(var);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = mu[i] - m[i];
    acc += std::exp(logv[i]) / var + d * d / var - 1.0 + log_var - logv[i];
  }
  return std::max(0.0, 0.5 * acc);
}

ComponentParams domain_component(const AttributeGmm& gmm, const DomainLabel& label) {
  validate_label(gmm, label);
  ComponentParams out;
  if (gmm.mode == GmmMode::categorical) {
    const int k = component_of(gmm, label);
    out.mean = gmm.means[k];
    out.scale.assign(gmm.dim, gmm.scales[k]);
    return out;
  }
  out.mean.resize(gmm.dim);
  out.scale.resize(gmm.dim);
  for (std::size_t a = 0; a < gmm.blocks.size(); ++a) {
    const auto& block = gmm.blocks[a];
    const auto& src = label.bits[a] ? block.on_mean : block.off_mean;
    std::copy(src.begin(), src.end(), out.mean.begin() + block.offset);
    std::fill_n(out.scale.begin() + block.offset, block.size, block.scale);
  }
  return out;
}

Interpolation interpolate_codes(const Vector& a, const Vector& b, double t) {
  if (a.size() != b.size()) throw ArgumentError("interpolate_codes: length mismatch");
  if (!std::isfinite(t)) throw ArgumentError("interpolate_codes: non-finite t");
  Interpolation out;
  out.extrapolated = t < 0.0 || t > 1.0;
  out.code.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (t == 0.0) {
      out.code[i] = a[i];
    } else if (t == 1.0) {
      out.code[i] = b[i];
    } else {
      out.code[i] = (1.0 - t) * a[i] + t * b[i];
    }
  }
  return out;
}

void validate_label(const AttributeGmm& gmm, const DomainLabel& label) {
  if (static_cast<int>(label.bits.size()) != gmm.label_width()) {
    throw LabelError("label has " + std::to_string(label.bits.size()) + " bits, expected " +
                     std::to_string(gmm.label_width()));
  }
  int on = 0;
  for (auto b : label.bits) {
    if (b > 1) throw LabelError("label bits must be 0 or 1");
    on += b;
  }
  if (gmm.mode == GmmMode::categorical && on != 1) {
    throw LabelError("categorical label must have exactly one bit set");
  }
  if (gmm.mode == GmmMode::factorized && !groups_satisfied(gmm.groups, label.bits)) {
    throw LabelError("label '" + label_name(gmm, label.bits) + "' violates an exclusivity group");
  }
}

std::vector<DomainLabel> enumerate_labels(const AttributeGmm& gmm) {
  const int width = gmm.label_width();
  std::vector<DomainLabel> labels;
  if (gmm.mode == GmmMode::categorical) {
    for (int k = 0; k < width; ++k) {
      std::vector<std::uint8_t> bits(width, 0);
      bits[k] = 1;
      labels.push_back({bits, gmm.attributes[k]});
    }
    return labels;
  }
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << width); ++mask) {
    auto bits = bits_of_mask(mask, width);
    if (!groups_satisfied(gmm.groups, bits)) continue;
    labels.push_back({bits, label_name(gmm, bits)});
  }
  return labels;
}

DomainLabel label_for_component(const AttributeGmm& gmm, int k) {
  if (gmm.mode == GmmMode::categorical) {
    if (k < 0 || k >= gmm.label_width()) throw ArgumentError("component index out of range");
    std::vector<std::uint8_t> bits(gmm.label_width(), 0);
    bits[k] = 1;
    return {bits, gmm.attributes[k]};
  }
  const auto labels = enumerate_labels(gmm);
  if (k < 0 || k >= static_cast<int>(labels.size())) throw ArgumentError("component index out of range");
  return labels[k];
}

int component_of(const AttributeGmm& gmm, const DomainLabel& label) {
  validate_label(gmm, label);
  if (gmm.mode == GmmMode::categorical) {
    return static_cast<int>(std::find(label.bits.begin(), label.bits.end(), 1) - label.bits.begin());
  }
  const auto labels = enumerate_labels(gmm);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].bits == label.bits) return static_cast<int>(i);
  }
  throw LabelError("label not in the enumeration");
}

std::string label_name(const AttributeGmm& gmm, const std::vector<std::uint8_t>& bits) {
  std::vector<std::string> on;
  for (std::size_t i = 0; i < bits.size() && i < gmm.attributes.size(); ++i) {
    if (bits[i]) on.push_back(gmm.attributes[i]);
  }
  return on.empty() ? "none" : join(on, "+");
}

DomainLabel parse_label(const AttributeGmm& gmm, std::string_view text) {
  const std::string t = trim(text);
  const int width = gmm.label_width();
  DomainLabel label;
  label.bits.assign(width, 0);
  const bool is_bits = static_cast<int>(t.size()) == width &&
                       std::all_of(t.begin(), t.end(), [](char c) { return c == '0' || c == '1'; });
  if (is_bits) {
    for (int i = 0; i < width; ++i) label.bits[i] = static_cast<std::uint8_t>(t[i] - '0');
  } else if (t != "none") {
    for (const auto& part : split(t, '+')) {
      const auto it = std::find(gmm.attributes.begin(), gmm.attributes.end(), part);
      if (it == gmm.attributes.end()) throw LabelError("unknown domain or attribute '" + part + "'");
      label.bits[it - gmm.attributes.begin()] = 1;
    }
  }
  validate_label(gmm, label);
  label.name = label_name(gmm, label.bits);
  return label;
}

}  // namespace gmmunit
