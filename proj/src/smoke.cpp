#include "gmmunit/smoke.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gmmunit/errors.hpp"
#include "gmmunit/evaluation.hpp"
#include "gmmunit/kv.hpp"

namespace gmmunit {

namespace fs = std::filesystem;

DatasetSpec prepare_smoke_data(const SmokeSettings& s) {
  const auto root = fs::path(s.dir) / "data";
  const auto marker = root / "complete";
  const int domains = 3;
  if (!fs::exists(marker)) {
    fs::remove_all(root);
    const auto glyphs = render_digit_glyphs(domains * s.per_domain, s.image_size, derive_seed(s.seed, 1));
    build_toy_domains(glyphs, domains, derive_seed(s.seed, 2), root.string(), s.holdout);
    std::ofstream(marker) << "ok\n";
  }
  DatasetSpec spec;
  spec.root = root.string();
  spec.labels = LabelSource::folders;
  spec.image_size = s.image_size;
  spec.split_seed = derive_seed(s.seed, 2);
  spec.holdout = s.holdout;
  return spec;
}

TrainState smoke_train_state(const SmokeSettings& s, Variant variant) {
  NetworkConfig net;
  net.image_size = s.image_size;
  net.base_channels = s.base_channels;
  net.mapping_hidden = s.mapping_hidden;
  net.reduced_depth = s.reduced_depth;
  net.num_domains = 3;
  const auto gmm = make_gmm_spec(GmmMode::categorical, net.code_dim(), 3, 1.0, 0.5, {toy_domain_name(0),
                                 toy_domain_name(1), toy_domain_name(2)});
  TrainConfig train;
  train.batch_size = s.batch_size;
  train.iterations = s.iterations;
  train.snapshot_every = 500;
  train.sample_every = 1000;
  train.log_every = 100;
  train.seed = s.seed;
  train.variant = variant;
  return make_train_state(net, gmm, LossWeights{}, train);
}

std::string smoke_run_dir(const SmokeSettings& s, Variant variant) {
  return (fs::path(s.dir) / std::string(to_string(variant))).string();
}

void run_smoke_training(const SmokeSettings& s, Variant variant, std::ostream* log) {
  const auto data = load_dataset(prepare_smoke_data(s));
  auto state = smoke_train_state(s, variant);
  run_training(state, data, smoke_run_dir(s, variant), log);
}

namespace {

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * v << "%";
  return s.str();
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

TrainState trained(const SmokeSettings& s, Variant variant, std::ostream* log) {
  const auto latest = fs::path(smoke_run_dir(s, variant)) / "checkpoints" / "latest.bin";
  if (fs::exists(latest)) {
    auto state = checkpoint_load(latest.string());
    if (state.iteration >= s.iterations) return state;
  }
  if (log) *log << "training " << to_string(variant) << " to " << s.iterations << " iterations\n";
  run_smoke_training(s, variant, log);
  return checkpoint_load(latest.string());
}

ProbeClassifier smoke_probe(const SmokeSettings& s, const Dataset& data, std::ostream* log) {
  const auto path = fs::path(s.dir) / "probe.bin";
  if (fs::exists(path)) return ProbeClassifier::load(path.string());
  ProbeTraining options;
  options.seed = derive_seed(s.seed, 3);
  auto probe = train_probe(data, options, log);
  probe.save(path.string());
  return probe;
}

torch::Tensor translate_batch(TrainState& state, const torch::Tensor& x, const std::vector<DomainLabel>& targets,
                              Rng& rng) {
  std::vector<Vector> codes;
  for (const auto& t : targets) codes.push_back(sample_label(state.gmm, t, rng));
  const auto xs = x.to(state.nets.options());
  const auto out = translate(state.nets, xs, content_of(state.nets, xs), codes_to_tensor(codes, state.nets.options()));
  return quantize(out.to(torch::kFloat32));
}

// Diversity of S samples per input, each input sent to the next domain.
double smoke_diversity(TrainState& state, const Dataset& data, const std::vector<int64_t>& inputs,
                       ProbeClassifier& probe, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  constexpr int kSamples = 10;
  Rng rng(seed);
  std::vector<torch::Tensor> per_input;
  for (auto i : inputs) {
    const int src = component_of(state.gmm, data.labels[i]);
    const auto target = label_for_component(state.gmm, (src + 1) % state.gmm.component_count());
    const auto x = data.batch({i}).repeat({kSamples, 1, 1, 1});
    per_input.push_back(translate_batch(state, x, std::vector<DomainLabel>(kSamples, target), rng));
  }
  return diversity_score(per_input, probe).mean;
}

}  // namespace

SmokeReport run_smoke(const SmokeSettings& s, const SmokeThresholds& th, std::ostream* log) {
  const auto data = load_dataset(prepare_smoke_data(s));
  if (data.test.empty()) throw ConfigError("the smoke experiment needs held-out images");
  auto probe = smoke_probe(s, data, log);
  auto full = trained(s, Variant::full, log);
  auto sigma0 = trained(s, Variant::sigma0, log);
  torch::NoGradGuard no_grad;
  SmokeReport report;
  report.probe_accuracy = probe.real_accuracy;
  const int k = full.gmm.component_count();
  const auto& held = data.test;

  // (a) every held-out image translated to each other domain.
  {
    Rng rng(derive_seed(s.seed, 10));
    std::vector<torch::Tensor> outs;
    std::vector<DomainLabel> targets;
    for (int shift = 1; shift < k; ++shift) {
      std::vector<DomainLabel> t;
      for (auto i : held) t.push_back(label_for_component(full.gmm, (component_of(full.gmm, data.labels[i]) + shift) % k));
      outs.push_back(translate_batch(full, data.batch(held), t, rng));
      targets.insert(targets.end(), t.begin(), t.end());
    }
    report.translation_accuracy = domain_accuracy(torch::cat(outs, 0), targets, probe);
    const bool pass = report.translation_accuracy >= th.translation_accuracy && report.probe_accuracy >= th.probe_accuracy;
    report.checks.push_back({"translation accuracy", pass,
                             pct(report.translation_accuracy) + " (need >= " + pct(th.translation_accuracy) +
                                 "), probe on real images " + pct(report.probe_accuracy) + " (need >= " +
                                 pct(th.probe_accuracy) + ")"});
  }

  // (b) diversity, both variants on the same inputs and draws.
  {
    std::vector<int64_t> inputs(held.begin(), held.begin() + std::min<std::size_t>(100, held.size()));
    report.diversity_full = smoke_diversity(full, data, inputs, probe, derive_seed(s.seed, 11));
    report.diversity_sigma0 = smoke_diversity(sigma0, data, inputs, probe, derive_seed(s.seed, 11));
    const bool pass = report.diversity_full >= th.diversity_ratio * report.diversity_sigma0 &&
                      report.diversity_sigma0 < th.sigma0_diversity && report.diversity_full > 0.0;
    report.checks.push_back({"diversity", pass,
                             "full " + num(report.diversity_full) + ", sigma0 " + num(report.diversity_sigma0) +
                                 " (need full >= " + num(th.diversity_ratio) + "x sigma0 and sigma0 < " +
                                 num(th.sigma0_diversity) + ")"});
  }

  // (c) self-reconstruction of held-out images.
  {
    const auto x = data.batch(held).to(full.nets.options());
    const auto a = encode_attributes(full.nets, x).mean;
    const auto rec = translate(full.nets, x, content_of(full.nets, x), a);
    report.reconstruction_mae = (rec - x).abs().mean().item<double>();
    report.checks.push_back({"self-reconstruction", report.reconstruction_mae <= th.reconstruction_mae,
                             "MAE " + num(report.reconstruction_mae) + " (need <= " + num(th.reconstruction_mae) + ")"});
  }

  // (d) interpolation between the means of the two other domains.
  {
    constexpr int kSteps = 11;
    int single = 0;
    for (auto i : held) {
      const int src = component_of(full.gmm, data.labels[i]);
      const auto ma = domain_component(full.gmm, label_for_component(full.gmm, (src + 1) % k)).mean;
      const auto mb = domain_component(full.gmm, label_for_component(full.gmm, (src + 2) % k)).mean;
      std::vector<Vector> codes;
      for (int j = 0; j < kSteps; ++j) codes.push_back(interpolate_codes(ma, mb, j / double(kSteps - 1)).code);
      const auto x = data.batch({i}).repeat({kSteps, 1, 1, 1}).to(full.nets.options());
      const auto strip = translate(full.nets, x, content_of(full.nets, x), codes_to_tensor(codes, full.nets.options()));
      const auto predicted = probe.predict(quantize(strip.to(torch::kFloat32)));
      int flips = 0;
      for (int j = 1; j < kSteps; ++j) flips += !(predicted[j] == predicted[j - 1]);
      single += flips <= 1;
    }
    report.single_flip_fraction = static_cast<double>(single) / static_cast<double>(held.size());
    report.checks.push_back({"interpolation continuity", report.single_flip_fraction >= th.single_flip_fraction,
                             pct(report.single_flip_fraction) + " of strips change domain at most once (need >= " +
                                 pct(th.single_flip_fraction) + ")"});
  }

  std::ofstream out(fs::path(s.dir) / "smoke_report.txt");
  for (const auto& c : report.checks) out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  return report;
}

}  // namespace gmmunit
