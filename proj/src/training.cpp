#include "gmmunit/training.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gmmunit/checkpoint.hpp"
#include "gmmunit/errors.hpp"
#include "gmmunit/kv.hpp"

namespace gmmunit {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStateFormat = "gmmunit-train-state";

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"image_size", c.image_size},
          {"base_channels", c.base_channels},
          {"style_blocks", c.style_blocks},
          {"attr_dim", c.attr_dim},
          {"num_domains", c.num_domains},
          {"reduced_depth", c.reduced_depth},
          {"attention", c.attention},
          {"attention_guidance", c.attention_guidance},
          {"disentangled", c.disentangled},
          {"mapping_hidden", c.mapping_hidden},
          {"logvar_min", c.logvar_min},
          {"logvar_max", c.logvar_max}};
}

NetworkConfig network_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  j.at("image_size").get_to(c.image_size);
  j.at("base_channels").get_to(c.base_channels);
  j.at("style_blocks").get_to(c.style_blocks);
  j.at("attr_dim").get_to(c.attr_dim);
  j.at("num_domains").get_to(c.num_domains);
  j.at("reduced_depth").get_to(c.reduced_depth);
  j.at("attention").get_to(c.attention);
  j.at("attention_guidance").get_to(c.attention_guidance);
  j.at("disentangled").get_to(c.disentangled);
  j.at("mapping_hidden").get_to(c.mapping_hidden);
  j.at("logvar_min").get_to(c.logvar_min);
  j.at("logvar_max").get_to(c.logvar_max);
  return c;
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"s_rec", w.s_rec}, {"cyc", w.cyc},     {"kl", w.kl},       {"iso", w.iso},
          {"perc", w.perc},   {"c_rec", w.c_rec}, {"a_rec", w.a_rec}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  j.at("s_rec").get_to(w.s_rec);
  j.at("cyc").get_to(w.cyc);
  j.at("kl").get_to(w.kl);
  j.at("iso").get_to(w.iso);
  j.at("perc").get_to(w.perc);
  j.at("c_rec").get_to(w.c_rec);
  j.at("a_rec").get_to(w.a_rec);
  return w;
}

nlohmann::json to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"iterations", t.iterations},
          {"base_lr", t.base_lr},
          {"lr_half_every", t.lr_half_every},
          {"snapshot_every", t.snapshot_every},
          {"sample_every", t.sample_every},
          {"log_every", t.log_every},
          {"mirror", t.mirror},
          {"attr_point", t.attr_point == AttributePointMode::mean ? "mean" : "reparameterized"},
          {"adv_flavor", std::string(to_string(t.adv_flavor))},
          {"exhaustive_targets", t.exhaustive_targets},
          {"seed", t.seed},
          {"variant", std::string(to_string(t.variant))}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  j.at("batch_size").get_to(t.batch_size);
  j.at("iterations").get_to(t.iterations);
  j.at("base_lr").get_to(t.base_lr);
  j.at("lr_half_every").get_to(t.lr_half_every);
  j.at("snapshot_every").get_to(t.snapshot_every);
  j.at("sample_every").get_to(t.sample_every);
  j.at("log_every").get_to(t.log_every);
  j.at("mirror").get_to(t.mirror);
  t.attr_point = j.at("attr_point").get<std::string>() == "mean" ? AttributePointMode::mean
                                                                  : AttributePointMode::reparameterized;
  t.adv_flavor = parse_adv_flavor(j.at("adv_flavor").get<std::string>());
  j.at("exhaustive_targets").get_to(t.exhaustive_targets);
  j.at("seed").get_to(t.seed);
  t.variant = parse_variant(j.at("variant").get<std::string>());
  return t;
}

bool finite(const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); }

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.requires_grad_(on);
}

void clear_grads(const std::vector<torch::Tensor>& params) {
  for (auto p : params) p.mutable_grad() = torch::Tensor();
}

std::vector<torch::Tensor> grads_of(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  return grads;
}

int target_count(const TrainState& state) { return state.gmm.component_count(); }

void store_moments(TensorArchive& archive, const std::string& prefix, const AdamMoments& m) {
  for (std::size_t i = 0; i < m.first.size(); ++i) {
    archive.add(prefix + "m/" + std::to_string(i), m.first[i]);
    archive.add(prefix + "v/" + std::to_string(i), m.second[i]);
  }
}

void restore_moments(const TensorArchive& archive, const std::string& prefix, AdamMoments& m, std::int64_t steps) {
  for (std::size_t i = 0; i < m.first.size(); ++i) {
    const auto& first = archive.at(prefix + "m/" + std::to_string(i));
    const auto& second = archive.at(prefix + "v/" + std::to_string(i));
    if (first.sizes() != m.first[i].sizes() || second.sizes() != m.second[i].sizes()) {
      throw CheckpointError("optimizer moment shape mismatch at " + prefix + std::to_string(i));
    }
    m.first[i].copy_(first);
    m.second[i].copy_(second);
  }
  m.steps = steps;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::sigma0: return "sigma0";
    case Variant::no_cyc: return "no-cyc";
    case Variant::no_attr_rec: return "no-attr-rec";
    case Variant::no_iso: return "no-iso";
    case Variant::no_disent: return "no-disent";
  }
  return "full";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::full, Variant::sigma0, Variant::no_cyc, Variant::no_attr_rec, Variant::no_iso,
                 Variant::no_disent}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) +
                    "' (expected full, sigma0, no-cyc, no-attr-rec, no-iso or no-disent)");
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (batch_size < 1) problems.push_back("train.batch_size must be >= 1");
  if (iterations < 0) problems.push_back("train.iterations must be >= 0");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) problems.push_back("train.lr must be a positive number");
  if (lr_half_every < 1) problems.push_back("train.lr_half_every must be >= 1");
  if (snapshot_every < 0 || sample_every < 0 || log_every < 0) {
    problems.push_back("train cadences must be >= 0 (0 disables)");
  }
  if (!problems.empty()) throw ConfigError(join(problems, "; "));
}

void apply_variant(Variant variant, NetworkConfig& net, GmmSpec& gmm, LossWeights& weights) {
  switch (variant) {
    case Variant::full: break;
    case Variant::sigma0:
      for (auto& s : gmm.scales) s = 0.0;
      // The divergence to a point mass is unbounded; the term is dropped.
      weights.kl = 0.0;
      break;
    case Variant::no_cyc: weights.cyc = 0.0; break;
    case Variant::no_attr_rec: weights.a_rec = 0.0; break;
    case Variant::no_iso: weights.iso = 0.0; break;
    case Variant::no_disent:
      net.disentangled = false;
      weights.c_rec = 0.0;
      break;
  }
}

TrainState make_train_state(NetworkConfig net, GmmSpec gmm, LossWeights weights, TrainConfig train,
                            torch::Dtype dtype) {
  train.validate();
  apply_variant(train.variant, net, gmm, weights);
  weights.validate();
  TrainState state;
  state.gmm = build_gmm(gmm);
  state.gmm_spec = std::move(gmm);
  if (state.gmm.label_width() != net.num_domains) {
    throw ConfigError("net.num_domains (" + std::to_string(net.num_domains) + ") must equal the label width (" +
                      std::to_string(state.gmm.label_width()) + ")");
  }
  if (state.gmm.dim != net.code_dim()) {
    throw ConfigError("gmm.dim (" + std::to_string(state.gmm.dim) + ") must equal style_blocks * attr_dim (" +
                      std::to_string(net.code_dim()) + ")");
  }
  if (train.exhaustive_targets && state.gmm.component_count() > 3) {
    throw ConfigError("exhaustive targets are limited to at most 3 components");
  }
  state.net = net;
  state.weights = weights;
  state.train = train;
  state.nets = Networks(net, derive_seed(train.seed, 100));
  state.nets.to(dtype);
  state.opt_g = AdamMoments::zeros_like(state.nets.generator_side_parameters());
  state.opt_d = AdamMoments::zeros_like(state.nets.discriminator_parameters());
  state.rng = Rng(derive_seed(train.seed, 200));
  return state;
}

StepSamples draw_step_samples(TrainState& state, int64_t batch_size) {
  StepSamples s;
  auto& rng = state.rng;
  s.flipped.assign(static_cast<std::size_t>(batch_size), false);
  if (state.train.mirror) {
    for (auto&& f : s.flipped) f = rng.bernoulli(0.5);
  }
  const int k = target_count(state);
  const int64_t m = state.train.exhaustive_targets ? batch_size * k : batch_size;
  for (int64_t i = 0; i < m; ++i) {
    const int comp = state.train.exhaustive_targets ? static_cast<int>(i / batch_size)
                                                    : static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    s.targets.push_back(label_for_component(state.gmm, comp));
  }
  for (const auto& t : s.targets) s.z.push_back(sample_label(state.gmm, t, rng));
  for (const auto& t : s.targets) s.z_prime.push_back(sample_label(state.gmm, t, rng));
  if (state.train.attr_point == AttributePointMode::reparameterized) {
    for (int64_t i = 0; i < m; ++i) {
      Vector e(static_cast<std::size_t>(state.gmm.dim));
      for (auto& v : e) v = rng.normal();
      s.eps.push_back(std::move(e));
    }
  }
  return s;
}

StepBatch prepare_batch(const TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels,
                        const StepSamples& samples) {
  check_image_batch(images, "train_step");
  if (images.size(0) != static_cast<int64_t>(labels.size())) {
    throw ShapeError("train_step: " + std::to_string(images.size(0)) + " images but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (samples.flipped.size() != labels.size()) throw ArgumentError("train_step: samples drawn for another batch size");
  for (const auto& l : labels) validate_label(state.gmm, l);
  StepBatch b;
  b.x = apply_mirror(images, samples.flipped).to(state.nets.options());
  b.labels = labels;
  if (state.train.exhaustive_targets) {
    const int k = target_count(state);
    b.x = b.x.repeat({k, 1, 1, 1});
    for (int j = 1; j < k; ++j) b.labels.insert(b.labels.end(), labels.begin(), labels.end());
  }
  if (b.labels.size() != samples.targets.size()) throw ArgumentError("train_step: sample count mismatch");
  return b;
}

std::map<std::string, torch::Tensor> discriminator_terms(TrainState& state, const StepBatch& batch,
                                                         const StepSamples& samples) {
  auto& nets = state.nets;
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    const auto z = codes_to_tensor(samples.z, nets.options());
    fake = translate(nets, batch.x, content_of(nets, batch.x), z);
  }
  const auto real = discriminate(nets, batch.x);
  const auto gen = discriminate(nets, fake.detach());
  std::map<std::string, torch::Tensor> terms;
  terms[term::adv_d] = loss_adv(real.rf_map, gen.rf_map, AdvSide::discriminator, state.train.adv_flavor);
  terms[term::dom_d] = loss_domain(real.domain_logits, batch.labels, state.domain_mode());
  return terms;
}

std::map<std::string, torch::Tensor> generator_terms(TrainState& state, const StepBatch& batch,
                                                     const StepSamples& samples) {
  auto& nets = state.nets;
  const auto& w = state.weights;
  const auto& x = batch.x;
  const auto opts = nets.options();
  const auto z = codes_to_tensor(samples.z, opts);

  const auto c = content_of(nets, x);
  const auto post = encode_attributes(nets, x);
  auto a_x = post.mean;
  if (state.train.attr_point == AttributePointMode::reparameterized) {
    a_x = post.mean + torch::exp(0.5 * post.logvar) * codes_to_tensor(samples.eps, opts);
  }

  std::map<std::string, torch::Tensor> terms;
  if (w.s_rec != 0.0) terms[term::s_rec] = loss_self_rec(x, translate(nets, x, c, a_x));

  const auto fake = translate(nets, x, c, z);
  const auto d = discriminate(nets, fake);
  terms[term::adv_g] = loss_adv({}, d.rf_map, AdvSide::generator, state.train.adv_flavor);
  terms[term::dom_g] = loss_domain(d.domain_logits, samples.targets, state.domain_mode());

  torch::Tensor c_fake;
  if (w.c_rec != 0.0 || w.cyc != 0.0) c_fake = content_of(nets, fake);
  if (w.c_rec != 0.0) terms[term::c_rec] = loss_content_rec(c, c_fake);
  if (w.a_rec != 0.0 || w.iso != 0.0) {
    const auto a_fake = encode_attributes(nets, fake).mean;
    if (w.a_rec != 0.0) terms[term::a_rec] = loss_attr_rec(z, a_fake);
    if (w.iso != 0.0) {
      const auto z2 = codes_to_tensor(samples.z_prime, opts);
      const auto a_fake2 = encode_attributes(nets, translate(nets, x, c, z2)).mean;
      terms[term::iso] = loss_iso(z, z2, a_fake, a_fake2);
    }
  }
  if (w.cyc != 0.0) terms[term::cyc] = loss_cycle(x, translate(nets, fake, c_fake, a_x));
  if (w.kl != 0.0) terms[term::kl] = loss_kl(post, batch.labels, state.gmm);
  if (w.perc != 0.0) terms[term::perc] = loss_perceptual(fake, x, state.perceptual.get());
  return terms;
}

TrainStepResult apply_step(TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels,
                           const StepSamples& samples) {
  TrainStepResult out;
  out.samples = samples;
  auto& report = out.report;
  report.iteration = state.iteration;
  const auto batch = prepare_batch(state, images, labels, samples);
  const double lr = lr_at(state.iteration, state.train.base_lr, state.train.lr_half_every);
  auto& nets = state.nets;
  const auto d_params = nets.discriminator_parameters();
  const auto g_params = nets.generator_side_parameters();

  std::vector<std::string> problems;
  {
    const auto terms = discriminator_terms(state, batch, samples);
    const auto loss = terms.at(term::adv_d) + terms.at(term::dom_d);
    for (const auto& [name, value] : terms) report.terms[name] = value.item<double>();
    report.loss_d = loss.item<double>();
    if (!finite(loss)) {
      problems.push_back("non-finite L_D");
    } else {
      clear_grads(d_params);
      loss.backward();
      const auto r = optimizer_step(d_params, grads_of(d_params), state.opt_d, lr);
      report.d_applied = r.applied;
      if (!r.applied) problems.push_back("D step rejected: " + r.reason);
      clear_grads(d_params);
    }
  }
  {
    set_requires_grad(d_params, false);
    try {
      const auto terms = generator_terms(state, batch, samples);
      const auto loss = total_generator_objective(terms, state.weights);
      for (const auto& [name, value] : terms) report.terms[name] = value.item<double>();
      report.loss_g = loss.item<double>();
      if (!finite(loss)) {
        problems.push_back("non-finite L_G");
      } else {
        clear_grads(g_params);
        loss.backward();
        const auto r = optimizer_step(g_params, grads_of(g_params), state.opt_g, lr);
        report.g_applied = r.applied;
        if (!r.applied) problems.push_back("G step rejected: " + r.reason);
        clear_grads(g_params);
      }
    } catch (...) {
      set_requires_grad(d_params, true);
      throw;
    }
    set_requires_grad(d_params, true);
  }
  if (!problems.empty()) report.status = join(problems, "; ");
  // The status lands in a CSV cell.
  for (auto& ch : report.status) {
    if (ch == ',') ch = ';';
  }
  ++state.iteration;
  return out;
}

TrainStepResult train_step(TrainState& state, const torch::Tensor& images, const std::vector<DomainLabel>& labels) {
  const auto samples = draw_step_samples(state, images.size(0));
  return apply_step(state, images, labels, samples);
}

std::vector<int64_t> sample_batch_indices(const Dataset& data, int batch_size, Rng& rng) {
  if (data.train.empty()) throw DataError("training split is empty");
  std::vector<int64_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) out.push_back(data.train[rng.index(data.train.size())]);
  return out;
}

void checkpoint_save(const TrainState& state, const std::string& path) {
  TensorArchive archive;
  archive.meta = {{"format", kStateFormat},
                  {"network", to_json(state.net)},
                  {"gmm", format_gmm_spec(state.gmm_spec)},
                  {"weights", to_json(state.weights)},
                  {"train", to_json(state.train)},
                  {"iteration", state.iteration},
                  {"rng", state.rng.state()},
                  {"opt_g_steps", state.opt_g.steps},
                  {"opt_d_steps", state.opt_d.steps},
                  {"dtype", state.nets.options().dtype() == torch::kFloat64 ? "float64" : "float32"}};
  for (const auto& [module, name, tensor] : state.nets.named_parameters()) {
    archive.add("params/" + module + "/" + name, tensor);
  }
  store_moments(archive, "adam_g/", state.opt_g);
  store_moments(archive, "adam_d/", state.opt_d);
  save_archive(archive, path);
}

TrainState checkpoint_load(const std::string& path) {
  const auto archive = load_archive(path);
  const auto& meta = archive.meta;
  TrainState state;
  try {
    if (meta.value("format", "") != kStateFormat) throw CheckpointError(path + ": not a training checkpoint");
    state.net = network_from_json(meta.at("network"));
    state.gmm_spec = parse_gmm_spec(meta.at("gmm").get<std::string>());
    state.gmm = build_gmm(state.gmm_spec);
    state.weights = weights_from_json(meta.at("weights"));
    state.train = train_from_json(meta.at("train"));
    state.iteration = meta.at("iteration").get<std::int64_t>();
    state.rng.restore(meta.at("rng").get<std::string>());
    const auto dtype = meta.at("dtype").get<std::string>() == "float64" ? torch::kFloat64 : torch::kFloat32;
    state.nets = Networks(state.net, 0);
    state.nets.to(dtype);
    torch::NoGradGuard no_grad;
    restore_module(archive, "params/content_encoder/", *state.nets.content);
    restore_module(archive, "params/attribute_encoder/", *state.nets.attribute);
    restore_module(archive, "params/generator/", *state.nets.generator);
    restore_module(archive, "params/discriminator/", *state.nets.discriminator);
    state.opt_g = AdamMoments::zeros_like(state.nets.generator_side_parameters());
    state.opt_d = AdamMoments::zeros_like(state.nets.discriminator_parameters());
    restore_moments(archive, "adam_g/", state.opt_g, meta.at("opt_g_steps").get<std::int64_t>());
    restore_moments(archive, "adam_d/", state.opt_d, meta.at("opt_d_steps").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": malformed metadata: " + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  return state;
}

std::vector<std::vector<torch::Tensor>> sample_grid(TrainState& state, const torch::Tensor& inputs, int rows_per_input,
                                                    std::uint64_t seed) {
  check_image_batch(inputs, "sample_grid");
  torch::NoGradGuard no_grad;
  auto& nets = state.nets;
  Rng rng(seed);
  const auto labels = enumerate_labels(state.gmm);
  const auto x = inputs.to(nets.options());
  const auto c = content_of(nets, x);
  std::vector<std::vector<torch::Tensor>> rows;
  for (int64_t i = 0; i < x.size(0); ++i) {
    for (int r = 0; r < rows_per_input; ++r) {
      std::vector<torch::Tensor> row{inputs[i].to(torch::kFloat32)};
      for (const auto& label : labels) {
        const auto z = codes_to_tensor({sample_label(state.gmm, label, rng)}, nets.options());
        const auto xi = x.slice(0, i, i + 1);
        row.push_back(translate(nets, xi, c.slice(0, i, i + 1), z)[0].to(torch::kFloat32));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

// Keeps the header and rows up to (excluding) `iteration`.
void truncate_loss_log(const fs::path& path, std::int64_t iteration) {
  std::vector<std::string> keep;
  {
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return;
    keep.push_back(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (parse_int(line.substr(0, comma)) < iteration) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

torch::Tensor grid_inputs(const Dataset& data, const AttributeGmm& gmm) {
  const auto& pool = data.test.empty() ? data.train : data.test;
  std::vector<int64_t> picks;
  for (const auto& label : enumerate_labels(gmm)) {
    const auto idx = data.with_label(pool, label);
    if (!idx.empty()) picks.push_back(idx.front());
  }
  if (picks.empty()) picks.push_back(pool.front());
  return data.batch(picks);
}

}  // namespace

void run_training(TrainState& state, const Dataset& data, const std::string& out_dir, std::ostream* log) {
  const fs::path root(out_dir);
  fs::create_directories(root / "checkpoints");
  fs::create_directories(root / "samples");
  const auto latest = root / "checkpoints" / "latest.bin";
  if (fs::exists(latest)) {
    auto perceptual = state.perceptual;
    auto resumed = checkpoint_load(latest.string());
    if (!(resumed.gmm_spec == state.gmm_spec) || resumed.train.variant != state.train.variant) {
      throw ConfigError(latest.string() + " belongs to a run with a different prior or variant");
    }
    resumed.train.iterations = state.train.iterations;
    state = std::move(resumed);
    state.perceptual = std::move(perceptual);
    if (log) *log << "resuming from iteration " << state.iteration << '\n';
  }

  const auto csv = root / "losses.csv";
  if (fs::exists(csv)) {
    truncate_loss_log(csv, state.iteration);
  } else {
    std::ofstream(csv) << LossReport::csv_header() << '\n';
  }
  std::ofstream losses(csv, std::ios::app);
  const auto inputs = grid_inputs(data, state.gmm);

  auto snapshot = [&](bool numbered) {
    if (numbered) {
      std::ostringstream name;
      name << "ckpt_" << std::setw(7) << std::setfill('0') << state.iteration << ".bin";
      checkpoint_save(state, (root / "checkpoints" / name.str()).string());
    }
    checkpoint_save(state, latest.string());
  };

  while (state.iteration < state.train.iterations) {
    const auto idx = sample_batch_indices(data, state.train.batch_size, state.rng);
    const auto result = train_step(state, data.batch(idx), data.labels_of(idx));
    losses << result.report.csv_row() << '\n';
    const auto it = state.iteration;
    if (log && (result.report.status != "ok" || (state.train.log_every && it % state.train.log_every == 0))) {
      *log << "iter " << it << " L_D " << format_double(result.report.loss_d) << " L_G "
           << format_double(result.report.loss_g) << " " << result.report.status << std::endl;
    }
    if (state.train.sample_every && it % state.train.sample_every == 0) {
      std::ostringstream name;
      name << "grid_" << std::setw(7) << std::setfill('0') << it << ".png";
      write_grid(sample_grid(state, inputs, 2, derive_seed(state.train.seed, 300)),
                 (root / "samples" / name.str()).string());
    }
    if (state.train.snapshot_every && it % state.train.snapshot_every == 0) {
      losses.flush();
      snapshot(true);
    }
  }
  losses.flush();
  snapshot(false);
}

}  // namespace gmmunit
