#include "gmmunit/objectives.hpp"

#include <sstream>

#include "gmmunit/kv.hpp"

namespace gmmunit {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* where) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(where) + ": shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {s_rec, cyc, kl, iso, perc, c_rec, a_rec}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

const std::vector<std::string>& term_names() {
  static const std::vector<std::string> names = {term::adv_d, term::dom_d, term::adv_g, term::s_rec,
                                                 term::c_rec, term::a_rec, term::cyc,   term::kl,
                                                 term::iso,   term::dom_g, term::perc};
  return names;
}

std::string_view to_string(AdvFlavor flavor) {
  return flavor == AdvFlavor::saturating ? "saturating" : "nonsaturating";
}

AdvFlavor parse_adv_flavor(std::string_view text) {
  if (text == "saturating") return AdvFlavor::saturating;
  if (text == "nonsaturating") return AdvFlavor::nonsaturating;
  throw ConfigError("unknown adversarial flavor '" + std::string(text) + "'");
}

torch::Tensor loss_l1(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "l1 loss");
  return (a - b).abs().mean();
}

torch::Tensor loss_iso(const torch::Tensor& z, const torch::Tensor& z_prime, const torch::Tensor& a,
                       const torch::Tensor& a_prime) {
  require_same_shape(z, z_prime, "loss_iso");
  require_same_shape(a, a_prime, "loss_iso");
  require_same_shape(z, a, "loss_iso");
  if (z.dim() != 2) throw ShapeError("loss_iso: expected [N, D] codes");
  const auto extracted = (a - a_prime).abs().sum(1);
  const auto sampled = (z - z_prime).abs().sum(1);
  return (extracted - sampled).abs().mean();
}

torch::Tensor loss_kl(const AttributePosterior& posterior, const torch::Tensor& mean, const torch::Tensor& scale) {
  require_same_shape(posterior.mean, posterior.logvar, "loss_kl");
  require_same_shape(posterior.mean, mean, "loss_kl");
  require_same_shape(mean, scale, "loss_kl");
  if (!(scale > 0).all().item<bool>()) throw ArgumentError("loss_kl: component scales must be positive");
  const auto var = scale * scale;
  const auto diff = mean - posterior.mean;
  const auto per_dim = torch::exp(posterior.logvar) / var + diff * diff / var - 1.0 + torch::log(var) - posterior.logvar;
  return 0.5 * per_dim.sum(1).mean();
}

torch::Tensor loss_kl(const AttributePosterior& posterior, const std::vector<DomainLabel>& labels,
                      const AttributeGmm& gmm) {
  std::vector<Vector> means, scales;
  for (const auto& label : labels) {
    auto c = domain_component(gmm, label);
    means.push_back(std::move(c.mean));
    scales.push_back(std::move(c.scale));
  }
  const auto options = posterior.mean.options();
  return loss_kl(posterior, codes_to_tensor(means, options), codes_to_tensor(scales, options));
}

torch::Tensor labels_to_tensor(const std::vector<DomainLabel>& labels, const torch::TensorOptions& options) {
  if (labels.empty()) throw LabelError("no labels");
  const auto width = static_cast<int64_t>(labels.front().bits.size());
  auto out = torch::zeros({static_cast<int64_t>(labels.size()), width}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int64_t>(labels[i].bits.size()) != width) throw LabelError("labels of different widths");
    for (int64_t j = 0; j < width; ++j) acc[i][j] = labels[i].bits[j];
  }
  return out.to(options.dtype());
}

torch::Tensor loss_domain(const torch::Tensor& logits, const torch::Tensor& targets, DomainLossMode mode) {
  if (logits.dim() != 2) throw ShapeError("loss_domain: expected [N, n] logits");
  require_same_shape(logits, targets, "loss_domain");
  if (mode == DomainLossMode::categorical) {
    if (!(targets.sum(1) == 1).all().item<bool>() || !((targets == 0) | (targets == 1)).all().item<bool>()) {
      throw LabelError("loss_domain: categorical targets must be one-hot");
    }
    return -(torch::log_softmax(logits, 1) * targets).sum(1).mean();
  }
  if (!((targets == 0) | (targets == 1)).all().item<bool>()) throw LabelError("loss_domain: targets must be 0/1");
  const auto per_bit = torch::clamp_min(logits, 0) - logits * targets + torch::log1p(torch::exp(-logits.abs()));
  return per_bit.mean();
}

torch::Tensor loss_domain(const torch::Tensor& logits, const std::vector<DomainLabel>& labels, DomainLossMode mode) {
  return loss_domain(logits, labels_to_tensor(labels, logits.options()), mode);
}

torch::Tensor loss_adv(const torch::Tensor& rf_real, const torch::Tensor& rf_fake, AdvSide side, AdvFlavor flavor) {
  if (side == AdvSide::discriminator) {
    return torch::softplus(-rf_real).mean() + torch::softplus(rf_fake).mean();
  }
  if (flavor == AdvFlavor::saturating) return -torch::softplus(rf_fake).mean();
  return torch::softplus(-rf_fake).mean();
}

torch::Tensor loss_perceptual(const torch::Tensor& x_a, const torch::Tensor& x_b, FeatureExtractor* extractor) {
  if (extractor == nullptr) throw ConfigError("perceptual loss enabled without a feature extractor");
  require_same_shape(x_a, x_b, "loss_perceptual");
  const auto fa = extractor->layers(x_a);
  const auto fb = extractor->layers(x_b);
  torch::Tensor total;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const auto d = (instance_norm(fa[i]) - instance_norm(fb[i])).pow(2).mean();
    total = total.defined() ? total + d : d;
  }
  return total / static_cast<double>(fa.size());
}

std::string LossReport::csv_header() {
  return "iteration," + join(term_names(), ",") + ",L_D,L_G,status";
}

std::string LossReport::csv_row() const {
  std::ostringstream row;
  row << iteration;
  for (const auto& name : term_names()) {
    const auto it = terms.find(name);
    row << ',' << format_double(it == terms.end() ? 0.0 : it->second);
  }
  row << ',' << format_double(loss_d) << ',' << format_double(loss_g) << ',' << status;
  return row.str();
}

LossReport LossReport::parse_csv_row(const std::string& row) {
  const auto cells = split(row, ',');
  const auto& names = term_names();
  if (cells.size() != names.size() + 4) throw DataError("loss log row has the wrong number of columns");
  LossReport r;
  r.iteration = parse_int(cells[0]);
  for (std::size_t i = 0; i < names.size(); ++i) r.terms[names[i]] = parse_double(cells[i + 1]);
  r.loss_d = parse_double(cells[names.size() + 1]);
  r.loss_g = parse_double(cells[names.size() + 2]);
  r.status = cells.back();
  return r;
}

}  // namespace gmmunit
