#include "gmmunit/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gmmunit/checkpoint.hpp"
#include "gmmunit/errors.hpp"
#include "gmmunit/kv.hpp"
#include "gmmunit/networks.hpp"
#include "gmmunit/objectives.hpp"
#include "gmmunit/rng.hpp"

namespace gmmunit {

namespace {

constexpr const char* kProbeFormat = "gmmunit-probe";

std::pair<torch::Tensor, torch::Tensor> moments(const torch::Tensor& f) {
  if (f.dim() != 2 || f.size(0) < 2) throw ArgumentError("frechet_distance: need at least two feature rows");
  if (!torch::isfinite(f).all().item<bool>()) throw NumericError("frechet_distance: non-finite features");
  const auto mean = f.mean(0);
  const auto centered = f - mean;
  const auto cov = centered.t().matmul(centered) / static_cast<double>(f.size(0) - 1);
  return {mean, cov};
}

// Eigenvalues of a symmetric matrix with tiny negatives clamped to zero.
torch::Tensor psd_eigenvalues(const torch::Tensor& m, torch::Tensor* vectors) {
  const auto sym = 0.5 * (m + m.t());
  auto [values, vecs] = torch::linalg_eigh(sym);
  const double top = std::max(1.0, values.abs().max().item<double>());
  if (values.min().item<double>() < -1e-6 * top) {
    throw NumericError("matrix square root: covariance product is not positive semi-definite");
  }
  if (vectors) *vectors = vecs;
  return values.clamp_min(0.0);
}

std::string bits_name(const std::vector<std::string>& attributes, const std::vector<std::uint8_t>& bits,
                      GmmMode mode) {
  std::vector<std::string> on;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) on.push_back(attributes[i]);
  }
  if (on.empty()) return mode == GmmMode::factorized ? "none" : "";
  return join(on, "+");
}

}  // namespace

FeatureSet feature_set(FeatureExtractor& extractor, const torch::Tensor& images, int64_t chunk) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    const auto layers = extractor.layers(images.slice(0, i, std::min(images.size(0), i + chunk)));
    parts.push_back(layers.back().to(torch::kFloat64).mean({2, 3}));
  }
  return {torch::cat(parts, 0), extractor.id()};
}

double frechet_from_moments(const torch::Tensor& mean_a, const torch::Tensor& cov_a, const torch::Tensor& mean_b,
                            const torch::Tensor& cov_b) {
  const auto ma = mean_a.to(torch::kFloat64);
  const auto mb = mean_b.to(torch::kFloat64);
  const auto ca = cov_a.to(torch::kFloat64);
  const auto cb = cov_b.to(torch::kFloat64);
  if (ma.sizes() != mb.sizes() || ca.sizes() != cb.sizes() || ca.size(0) != ma.size(0)) {
    throw DimensionError("frechet_distance: feature dimensions differ");
  }
  // Tr((C_a C_b)^(1/2)) = Tr((S C_b S)^(1/2)) with S = C_a^(1/2), which keeps
  // the matrix symmetric.
  torch::Tensor vecs;
  const auto va = psd_eigenvalues(ca, &vecs);
  const auto s = vecs.matmul(torch::diag(va.sqrt())).matmul(vecs.t());
  const auto inner = psd_eigenvalues(s.matmul(cb).matmul(s), nullptr);
  const double mean_term = (ma - mb).pow(2).sum().item<double>();
  const double trace = (ca.trace() + cb.trace()).item<double>() - 2.0 * inner.sqrt().sum().item<double>();
  return std::max(0.0, mean_term + trace);
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.extractor != b.extractor) {
    throw ArgumentError("frechet_distance: features come from different extractors (" + a.extractor + ", " +
                        b.extractor + ")");
  }
  const auto [ma, ca] = moments(a.features.to(torch::kFloat64));
  const auto [mb, cb] = moments(b.features.to(torch::kFloat64));
  return frechet_from_moments(ma, ca, mb, cb);
}

ScoreSummary diversity_from_embeddings(const std::vector<torch::Tensor>& per_input) {
  if (per_input.empty()) throw ArgumentError("diversity_score: no inputs");
  std::vector<double> scores;
  for (const auto& e : per_input) {
    const auto s = e.size(0);
    if (s < 2) throw ArgumentError("diversity_score: need at least two samples per input");
    const auto f = e.to(torch::kFloat64);
    double total = 0.0;
    for (int64_t i = 0; i < s; ++i) {
      for (int64_t j = i + 1; j < s; ++j) total += (f[i] - f[j]).pow(2).sum().item<double>();
    }
    scores.push_back(total / static_cast<double>(s * (s - 1) / 2));
  }
  ScoreSummary out;
  out.inputs = static_cast<int64_t>(scores.size());
  for (double v : scores) out.mean += v;
  out.mean /= static_cast<double>(scores.size());
  for (double v : scores) out.std += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(scores.size()));
  return out;
}

ScoreSummary diversity_score(const std::vector<torch::Tensor>& samples, FeatureExtractor& extractor) {
  std::vector<torch::Tensor> embeddings;
  embeddings.reserve(samples.size());
  for (const auto& s : samples) {
    check_image_batch(s, "diversity_score");
    embeddings.push_back(embed(extractor, s));
  }
  return diversity_from_embeddings(embeddings);
}

double background_diversity(const torch::Tensor& input, const torch::Tensor& samples, const torch::Tensor& region,
                            FeatureExtractor& extractor) {
  check_image_batch(samples, "background_diversity");
  if (input.dim() != 3 || input.sizes() != samples[0].sizes()) {
    throw ShapeError("background_diversity: input must be [3, h, w] matching the samples");
  }
  auto r = region.dim() == 2 ? region.unsqueeze(0) : region;
  if (r.dim() != 3 || r.size(0) != 1 || r.size(1) != input.size(1) || r.size(2) != input.size(2)) {
    throw ShapeError("background_diversity: region must be [h, w] or [1, h, w] at the image size");
  }
  r = r.to(torch::kFloat64);
  if (r.min().item<double>() < 0.0 || r.max().item<double>() > 1.0) {
    throw ArgumentError("background_diversity: region values must lie in [0, 1]");
  }
  if (r.max().item<double>() == 0.0) throw ArgumentError("background_diversity: empty region");
  const auto masked_input = (input.to(torch::kFloat64) * r).unsqueeze(0);
  const auto masked_samples = samples.to(torch::kFloat64) * r.unsqueeze(0);
  const auto a = embed(extractor, masked_input.to(samples.scalar_type()));
  const auto b = embed(extractor, masked_samples.to(samples.scalar_type()));
  return (b - a).pow(2).sum(1).mean().item<double>();
}

torch::Tensor background_region(const torch::Tensor& mask) { return (mask < 0.5).to(torch::kFloat32); }

ProbeNetImpl::ProbeNetImpl(int outputs, int width) {
  namespace nn = torch::nn;
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, width, 3).padding(1)));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(width, 2 * width, 4).stride(2).padding(1)));
  conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(2 * width, 4 * width, 4).stride(2).padding(1)));
  head_ = register_module("head", nn::Linear(4 * width, outputs));
}

std::vector<torch::Tensor> ProbeNetImpl::features(const torch::Tensor& x) {
  const auto h1 = torch::relu(conv1_(x));
  const auto h2 = torch::relu(conv2_(h1));
  const auto h3 = torch::relu(conv3_(h2));
  return {h1, h2, h3};
}

torch::Tensor ProbeNetImpl::forward(const torch::Tensor& x) { return head_(features(x).back().mean({2, 3})); }

ProbeClassifier::ProbeClassifier(GmmMode mode_, std::vector<std::string> attributes_, int image_size_, int width_,
                                 std::uint64_t seed)
    : mode(mode_), attributes(std::move(attributes_)), image_size(image_size_), width(width_) {
  if (attributes.size() < (mode == GmmMode::categorical ? 2u : 1u)) throw ArgumentError("probe: too few labels");
  net = ProbeNet(static_cast<int>(attributes.size()), width);
  init_parameters(*net, seed);
}

std::string ProbeClassifier::id() const {
  std::ostringstream s;
  s << "probe-w" << width << "-n" << attributes.size() << "-s" << image_size;
  return s.str();
}

std::vector<torch::Tensor> ProbeClassifier::layers(const torch::Tensor& images) {
  return net->features(images.to(torch::kFloat32));
}

torch::Tensor ProbeClassifier::logits(const torch::Tensor& images) { return net->forward(images.to(torch::kFloat32)); }

std::vector<DomainLabel> ProbeClassifier::predict(const torch::Tensor& images, int64_t chunk) {
  check_image_batch(images, "probe");
  torch::NoGradGuard no_grad;
  std::vector<DomainLabel> out;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    const auto l = logits(images.slice(0, i, std::min(images.size(0), i + chunk)));
    for (int64_t r = 0; r < l.size(0); ++r) {
      std::vector<std::uint8_t> bits(attributes.size(), 0);
      if (mode == GmmMode::categorical) {
        bits[l[r].argmax().item<int64_t>()] = 1;
      } else {
        for (std::size_t a = 0; a < bits.size(); ++a) bits[a] = l[r][static_cast<int64_t>(a)].item<float>() > 0.0f;
      }
      out.push_back({bits, bits_name(attributes, bits, mode)});
    }
  }
  return out;
}

void ProbeClassifier::save(const std::string& path) const {
  TensorArchive archive;
  archive.meta = {{"format", kProbeFormat},     {"mode", std::string(to_string(mode))},
                  {"attributes", attributes},   {"image_size", image_size},
                  {"width", width},             {"real_accuracy", real_accuracy}};
  store_module(archive, "probe/", *net);
  save_archive(archive, path);
}

ProbeClassifier ProbeClassifier::load(const std::string& path) {
  const auto archive = load_archive(path);
  const auto& meta = archive.meta;
  try {
    if (meta.value("format", "") != kProbeFormat) throw CheckpointError(path + ": not a probe file");
    ProbeClassifier probe(parse_gmm_mode(meta.at("mode").get<std::string>()),
                          meta.at("attributes").get<std::vector<std::string>>(), meta.at("image_size").get<int>(),
                          meta.at("width").get<int>());
    restore_module(archive, "probe/", *probe.net);
    probe.real_accuracy = meta.at("real_accuracy").get<double>();
    return probe;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": malformed probe metadata: " + e.what());
  }
}

ProbeClassifier train_probe(const Dataset& data, const ProbeTraining& options, std::ostream* log) {
  if (data.train.empty()) throw DataError("train_probe: empty training split");
  ProbeClassifier probe(data.mode, data.attributes, static_cast<int>(data.images.size(2)), options.width,
                        derive_seed(options.seed, 1));
  torch::optim::Adam opt(probe.net->parameters(), torch::optim::AdamOptions(options.lr));
  Rng rng(derive_seed(options.seed, 2));
  auto order = data.train;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::vector<int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                         order.size(), start + options.batch_size)));
      const auto x = data.batch(idx);
      const auto logits = probe.logits(x);
      const auto targets = labels_to_tensor(data.labels_of(idx), torch::TensorOptions().dtype(torch::kFloat32));
      torch::Tensor loss = data.mode == GmmMode::categorical
                               ? torch::nn::functional::cross_entropy(logits, targets.argmax(1))
                               : torch::nn::functional::binary_cross_entropy_with_logits(logits, targets);
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    if (log) *log << "probe epoch " << epoch + 1 << " loss " << format_double(total / batches) << '\n';
  }
  const auto& eval = data.test.empty() ? data.train : data.test;
  probe.real_accuracy = domain_accuracy(data.batch(eval), data.labels_of(eval), probe);
  if (log) *log << "probe accuracy on real images " << format_double(probe.real_accuracy) << '\n';
  return probe;
}

double domain_accuracy(const torch::Tensor& images, const std::vector<DomainLabel>& targets, ProbeClassifier& probe) {
  if (images.numel() == 0 || targets.empty()) throw ArgumentError("domain_accuracy: empty batch");
  if (images.size(0) != static_cast<int64_t>(targets.size())) {
    throw ShapeError("domain_accuracy: image and label counts differ");
  }
  const auto predicted = probe.predict(images);
  int64_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += predicted[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

void export_latents(const std::vector<LatentRow>& rows, const std::string& path) {
  if (rows.empty()) throw ArgumentError("export_latents: no codes");
  const auto dim = rows.front().code.size();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "label,source";
  for (std::size_t d = 0; d < dim; ++d) out << ",z" << d;
  out << '\n';
  for (const auto& r : rows) {
    if (r.code.size() != dim) throw DimensionError("export_latents: codes differ in length");
    if (r.label.find(',') != std::string::npos) throw ArgumentError("export_latents: label contains a comma");
    out << r.label << ',' << r.source;
    for (double v : r.code) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("short write to " + path);
}

std::vector<LatentRow> read_latents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty latent file");
  const auto columns = split(line, ',').size();
  std::vector<LatentRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != columns) throw DataError(path + ": ragged latent row");
    LatentRow r{cells[0], cells[1], {}};
    for (std::size_t i = 2; i < cells.size(); ++i) r.code.push_back(parse_double(cells[i]));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "model,target,metric,value,std,extractor,inputs,samples,seed\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.target << ',' << r.metric << ',' << format_double(r.value) << ','
        << format_double(r.std) << ',' << r.extractor << ',' << r.inputs << ',' << r.samples << ',' << r.seed << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 9) throw DataError(path + ": malformed metrics row");
    rows.push_back({c[0], c[1], c[2], parse_double(c[3]), parse_double(c[4]), c[5], parse_int(c[6]),
                    parse_int(c[7]), static_cast<std::uint64_t>(std::stoull(c[8]))});
  }
  return rows;
}

std::string metrics_summary(const std::vector<MetricRow>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(14) << "model" << std::setw(16) << "target" << std::setw(12) << "metric"
    << std::setw(22) << "value" << "extractor (inputs x samples, seed)\n";
  for (const auto& r : rows) {
    std::ostringstream v;
    v << std::setprecision(5) << r.value;
    if (r.std != 0.0) v << " +- " << std::setprecision(3) << r.std;
    s << std::setw(14) << r.model << std::setw(16) << r.target << std::setw(12) << r.metric << std::setw(22)
      << v.str() << r.extractor << " (" << r.inputs << " x " << r.samples << ", " << r.seed << ")\n";
  }
  return s.str();
}

}  // namespace gmmunit
