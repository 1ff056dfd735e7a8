#include "gmmunit/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "gmmunit/config.hpp"
#include "gmmunit/data.hpp"
#include "gmmunit/errors.hpp"
#include "gmmunit/evaluation.hpp"
#include "gmmunit/smoke.hpp"
#include "gmmunit/training.hpp"

namespace gmmunit {

namespace fs = std::filesystem;

namespace {

std::string fmt2(int v) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << v;
  return s.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

TrainState load_model(const std::string& path) {
  if (path.empty()) throw ArgumentError("--checkpoint is required");
  return checkpoint_load(path);
}

torch::Tensor load_input(const TrainState& state, const std::string& path) {
  return read_image(path, state.net.image_size).unsqueeze(0);
}

torch::Tensor to_model(const TrainState& state, const torch::Tensor& x) { return x.to(state.nets.options()); }

// Generated images rounded to what the PNG files hold.
torch::Tensor as_saved(const torch::Tensor& images) { return quantize(images.detach().to(torch::kFloat32)); }

torch::Tensor translate_codes(TrainState& state, const torch::Tensor& input, const std::vector<Vector>& codes) {
  torch::NoGradGuard no_grad;
  const auto x = to_model(state, input).repeat({static_cast<int64_t>(codes.size()), 1, 1, 1});
  return as_saved(translate(state.nets, x, content_of(state.nets, x), codes_to_tensor(codes, state.nets.options())));
}

Vector extract_code(TrainState& state, const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  return tensor_to_codes(encode_attributes(state.nets, to_model(state, image)).mean).front();
}

// An endpoint is an image file (its extracted code) or a domain label (the
// component mean).
Vector endpoint_code(TrainState& state, const std::string& text) {
  if (fs::is_regular_file(text)) return extract_code(state, load_input(state, text));
  return domain_component(state.gmm, parse_label(state.gmm, text)).mean;
}

// The run config of a training directory, or --config plus overrides.
RunConfig dataset_config(const std::string& run, const std::string& config, const std::vector<std::string>& sets) {
  if (!run.empty()) {
    const auto path = fs::path(run) / "config.txt";
    if (!fs::exists(path)) throw ConfigError(run + " has no config.txt");
    return load_run_config(path.string(), sets);
  }
  if (config.empty() && sets.empty()) throw ArgumentError("need --run or --config for the dataset");
  return load_run_config(config, sets);
}

std::string checkpoint_in(const std::string& run, const std::string& checkpoint) {
  if (!checkpoint.empty()) return checkpoint;
  if (!run.empty()) return (fs::path(run) / "checkpoints" / "latest.bin").string();
  throw ArgumentError("need --checkpoint or --run");
}

void check_dataset_matches(const Dataset& data, const TrainState& state) {
  if (data.attributes != state.gmm.attributes) {
    throw ConfigError("dataset labels (" + join(data.attributes, ",") + ") differ from the model's (" +
                      join(state.gmm.attributes, ",") + ")");
  }
}

// First `count` indices of a seeded shuffle of `pool`.
std::vector<int64_t> pick(std::vector<int64_t> pool, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
  pool.resize(std::min(count, pool.size()));
  return pool;
}

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string run;
  std::string input;
  std::vector<std::string> inputs;
  std::string reference;
  std::string domain;
  std::string from;
  std::string to;
  std::string variant;
  std::string probe;
  int samples = 1;
  int eval_samples = 10;
  int steps = 8;
  double t_min = 0.0;
  double t_max = 1.0;
  int count = 100;
  int domains = 3;
  int per_domain = 1000;
  int size = 32;
  int holdout = 0;
  int epochs = 4;
  std::int64_t iterations = 5000;
};

int cmd_train(Common& o, std::ostream& out) {
  auto cfg = load_run_config(o.config, o.sets);
  if (!o.variant.empty()) cfg.train.variant = parse_variant(o.variant);
  if (!o.out.empty()) cfg.out = o.out;
  cfg.train.seed = cfg.seed;
  if (cfg.dataset.root.empty()) throw ConfigError("dataset.root is not set");
  const auto data = load_dataset(cfg.dataset);
  const auto prior = resolve_prior(cfg, data.attributes);
  cfg.net.num_domains = static_cast<int>(data.attributes.size());
  auto state = make_train_state(cfg.net, prior, cfg.weights, cfg.train);
  if (cfg.weights.perc != 0.0) {
    if (o.probe.empty()) throw ConfigError("loss.perc > 0 needs a feature extractor (--probe)");
    state.perceptual = std::make_shared<ProbeClassifier>(ProbeClassifier::load(o.probe));
  }
  ensure_dir(cfg.out);
  to_document(cfg).save((fs::path(cfg.out) / "config.txt").string());
  std::ofstream((fs::path(cfg.out) / "prior.txt")) << format_gmm_spec(state.gmm_spec);
  run_training(state, data, cfg.out, &out);
  out << "trained " << state.iteration << " iterations into " << cfg.out << '\n';
  return exit_ok;
}

int cmd_translate(Common& o, std::ostream& out) {
  auto state = load_model(o.checkpoint);
  if (o.samples < 1) throw ArgumentError("--samples must be >= 1");
  const auto label = parse_label(state.gmm, o.domain);
  const auto x = load_input(state, o.input);
  Rng rng(o.seed);
  std::vector<Vector> codes;
  for (int s = 0; s < o.samples; ++s) codes.push_back(sample_label(state.gmm, label, rng));
  const auto images = translate_codes(state, x, codes);
  ensure_dir(o.out);
  std::vector<torch::Tensor> row{x[0]};
  for (int s = 0; s < o.samples; ++s) {
    write_image(images[s], (fs::path(o.out) / ("sample_" + fmt2(s) + ".png")).string());
    row.push_back(images[s]);
  }
  write_grid({row}, (fs::path(o.out) / "strip.png").string());
  out << "wrote " << o.samples << " translations to " << label.name << " in " << o.out << '\n';
  return exit_ok;
}

int cmd_style_transfer(Common& o, std::ostream& out) {
  auto state = load_model(o.checkpoint);
  const auto x = load_input(state, o.input);
  const auto ref = load_input(state, o.reference);
  const auto image = translate_codes(state, x, {extract_code(state, ref)});
  ensure_dir(o.out);
  write_image(image[0], (fs::path(o.out) / "output.png").string());
  write_grid({{x[0], ref[0], image[0]}}, (fs::path(o.out) / "strip.png").string());
  out << "wrote " << (fs::path(o.out) / "output.png").string() << '\n';
  return exit_ok;
}

int cmd_interpolate(Common& o, std::ostream& out) {
  auto state = load_model(o.checkpoint);
  if (o.steps < 1) throw ArgumentError("--steps must be >= 1");
  if (!std::isfinite(o.t_min) || !std::isfinite(o.t_max)) throw ArgumentError("--t-min/--t-max must be finite");
  const auto x = load_input(state, o.input);
  const auto a = endpoint_code(state, o.from);
  const auto b = endpoint_code(state, o.to);
  std::vector<Vector> codes;
  std::vector<double> ts;
  std::vector<bool> extrapolated;
  for (int j = 0; j < o.steps; ++j) {
    const double t = o.steps == 1 ? o.t_min : o.t_min + (o.t_max - o.t_min) * j / (o.steps - 1);
    const auto r = interpolate_codes(a, b, t);
    codes.push_back(r.code);
    ts.push_back(t);
    extrapolated.push_back(r.extrapolated);
  }
  const auto frames = translate_codes(state, x, codes);
  ensure_dir(o.out);
  std::ofstream csv(fs::path(o.out) / "strip.csv");
  csv << "frame,t,extrapolated\n";
  std::vector<torch::Tensor> row{x[0]};
  for (int j = 0; j < o.steps; ++j) {
    write_image(frames[j], (fs::path(o.out) / ("frame_" + fmt2(j) + ".png")).string());
    row.push_back(frames[j]);
    csv << j << ',' << format_double(ts[j]) << ',' << (extrapolated[j] ? 1 : 0) << '\n';
  }
  write_grid({row}, (fs::path(o.out) / "strip.png").string());
  out << "wrote " << o.steps << " frames to " << o.out << '\n';
  return exit_ok;
}

int cmd_sample_grid(Common& o, std::ostream& out) {
  auto state = load_model(o.checkpoint);
  if (o.inputs.empty()) throw ArgumentError("--input is required");
  if (o.samples < 1) throw ArgumentError("--samples must be >= 1");
  std::vector<torch::Tensor> xs;
  for (const auto& p : o.inputs) xs.push_back(load_input(state, p));
  auto rows = sample_grid(state, torch::cat(xs, 0), o.samples, o.seed);
  for (auto& row : rows) {
    for (std::size_t c = 1; c < row.size(); ++c) row[c] = as_saved(row[c]);
  }
  const auto path = fs::path(o.out).extension() == ".png" ? fs::path(o.out) : fs::path(o.out) / "grid.png";
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  write_grid(rows, path.string());
  out << "wrote " << path.string() << '\n';
  return exit_ok;
}

int cmd_eval(Common& o, std::ostream& out) {
  const auto cfg = dataset_config(o.run, o.config, o.sets);
  auto state = load_model(checkpoint_in(o.run, o.checkpoint));
  const auto data = load_dataset(cfg.dataset);
  check_dataset_matches(data, state);
  const int samples = o.eval_samples;
  if (samples < 2) throw ArgumentError("--samples must be >= 2 for diversity");
  std::unique_ptr<FeatureExtractor> identity;
  std::optional<ProbeClassifier> probe;
  FeatureExtractor* extractor = nullptr;
  if (!o.probe.empty()) {
    probe.emplace(ProbeClassifier::load(o.probe));
    extractor = &*probe;
  } else {
    identity = std::make_unique<IdentityExtractor>();
    extractor = identity.get();
  }
  const auto& pool = data.test.empty() ? data.train : data.test;
  const auto inputs = pick(pool, static_cast<std::size_t>(o.count), derive_seed(o.seed, 1));
  const std::string out_dir = o.out.empty() ? (fs::path(o.run.empty() ? "." : o.run) / "eval").string() : o.out;
  const std::string model(to_string(state.train.variant));
  Rng rng(derive_seed(o.seed, 2));
  std::vector<MetricRow> rows;
  for (const auto& target : enumerate_labels(state.gmm)) {
    const auto dir = fs::path(out_dir) / "samples" / target.name;
    ensure_dir(dir.string());
    std::vector<torch::Tensor> per_input;
    for (std::size_t n = 0; n < inputs.size(); ++n) {
      std::vector<Vector> codes;
      for (int s = 0; s < samples; ++s) codes.push_back(sample_label(state.gmm, target, rng));
      const auto images = translate_codes(state, data.batch({inputs[n]}), codes);
      for (int s = 0; s < samples; ++s) {
        std::ostringstream name;
        name << std::setw(4) << std::setfill('0') << n << '_' << fmt2(s) << ".png";
        write_image(images[s], (dir / name.str()).string());
      }
      per_input.push_back(images);
    }
    const auto n_in = static_cast<int64_t>(inputs.size());
    const auto div = diversity_score(per_input, *extractor);
    rows.push_back({model, target.name, "diversity", div.mean, div.std, extractor->id(), n_in, samples, o.seed});
    const auto generated = torch::cat(per_input, 0);
    const auto real_idx = data.with_label(pool, target);
    if (real_idx.size() >= 2) {
      const double fd =
          frechet_distance(feature_set(*extractor, data.batch(real_idx)), feature_set(*extractor, generated));
      rows.push_back({model, target.name, "frechet", fd, 0.0, extractor->id(), n_in, samples, o.seed});
    }
    if (probe) {
      const double acc =
          domain_accuracy(generated, std::vector<DomainLabel>(static_cast<std::size_t>(generated.size(0)), target),
                          *probe);
      rows.push_back({model, target.name, "accuracy", acc, 0.0, probe->id(), n_in, samples, o.seed});
    }
  }
  ensure_dir(out_dir);
  write_metrics_csv(rows, (fs::path(out_dir) / "metrics.csv").string());
  const auto summary = metrics_summary(rows);
  std::ofstream(fs::path(out_dir) / "summary.txt") << summary;
  out << summary;
  return exit_ok;
}

int cmd_export_latents(Common& o, std::ostream& out) {
  const auto cfg = dataset_config(o.run, o.config, o.sets);
  auto state = load_model(checkpoint_in(o.run, o.checkpoint));
  const auto data = load_dataset(cfg.dataset);
  check_dataset_matches(data, state);
  if (o.count < 1) throw ArgumentError("--count must be >= 1");
  Rng rng(derive_seed(o.seed, 1));
  std::vector<LatentRow> rows;
  const auto& pool = data.test.empty() ? data.train : data.test;
  for (const auto& label : enumerate_labels(state.gmm)) {
    for (int i = 0; i < o.count; ++i) rows.push_back({label.name, "sampled", sample_label(state.gmm, label, rng)});
    const auto idx = pick(data.with_label(pool, label), static_cast<std::size_t>(o.count), derive_seed(o.seed, 2));
    if (idx.empty()) continue;
    torch::NoGradGuard no_grad;
    const auto codes = tensor_to_codes(encode_attributes(state.nets, to_model(state, data.batch(idx))).mean);
    for (const auto& c : codes) rows.push_back({label.name, "extracted", c});
  }
  const std::string path = o.out.empty() ? "latents.csv" : o.out;
  if (fs::path(path).has_parent_path()) ensure_dir(fs::path(path).parent_path().string());
  export_latents(rows, path);
  out << "wrote " << rows.size() << " codes to " << path << '\n';
  return exit_ok;
}

int cmd_make_toy(Common& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("--out is required");
  const auto glyphs = render_digit_glyphs(o.domains * o.per_domain, o.size, derive_seed(o.seed, 1));
  const auto spec = build_toy_domains(glyphs, o.domains, derive_seed(o.seed, 2), o.out, o.holdout);
  out << "dataset.root = " << spec.root << "\ndataset.labels = folders\ndataset.image_size = " << spec.image_size
      << "\ndataset.split_seed = " << spec.split_seed << "\ndataset.holdout = " << spec.holdout << '\n';
  return exit_ok;
}

int cmd_train_probe(Common& o, std::ostream& out) {
  const auto cfg = dataset_config(o.run, o.config, o.sets);
  const auto data = load_dataset(cfg.dataset);
  ProbeTraining options;
  options.epochs = o.epochs;
  options.seed = o.seed;
  const auto probe = train_probe(data, options, &out);
  const std::string path = o.out.empty() ? "probe.bin" : o.out;
  probe.save(path);
  out << "probe accuracy " << format_double(probe.real_accuracy) << ", saved to " << path << '\n';
  return exit_ok;
}

int cmd_smoke(Common& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("--out is required");
  SmokeSettings s;
  s.dir = o.out;
  s.iterations = o.iterations;
  const auto report = run_smoke(s, {}, &out);
  bool all = true;
  for (const auto& c : report.checks) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    all = all && c.pass;
  }
  return all ? exit_ok : exit_internal;
}

std::pair<std::string, int> classify(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return {"config", exit_config};
    case ErrorKind::data: return {"data", exit_data};
    case ErrorKind::checkpoint: return {"checkpoint", exit_checkpoint};
    case ErrorKind::numeric: return {"numeric", exit_numeric};
    default: return {"usage", exit_usage};
  }
}

std::string one_line(std::string text) {
  for (auto& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain image translation with a mixture-of-Gaussians attribute prior", "gmmunit"};
  app.require_subcommand(1);
  Common o;
  std::function<int(Common&, std::ostream&)> action;

  auto sub = [&](const char* name, const char* help, int (*fn)(Common&, std::ostream&)) {
    auto* c = app.add_subcommand(name, help);
    c->callback([&action, fn] { action = fn; });
    c->add_option("--seed", o.seed, "random seed")->capture_default_str();
    return c;
  };
  auto config_opts = [&o](CLI::App* c) {
    c->add_option("--config", o.config, "key = value config file");
    c->add_option("--set", o.sets, "config override key=value (repeatable)");
  };

  auto* train = sub("train", "train a model", cmd_train);
  config_opts(train);
  train->add_option("--out", o.out, "run directory (overrides the out key)");
  train->add_option("--variant", o.variant, "full | sigma0 | no-cyc | no-attr-rec | no-iso | no-disent");
  train->add_option("--probe", o.probe, "feature extractor for the perceptual term");

  auto* tr = sub("translate", "translate an image with sampled attribute codes", cmd_translate);
  tr->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  tr->add_option("--input", o.input, "input image")->required();
  tr->add_option("--domain", o.domain, "target domain or attribute combination")->required();
  tr->add_option("--samples", o.samples, "number of samples")->capture_default_str();
  tr->add_option("--out", o.out, "output directory")->required();

  auto* st = sub("style-transfer", "translate with the code extracted from a reference image", cmd_style_transfer);
  st->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  st->add_option("--input", o.input, "input image")->required();
  st->add_option("--reference", o.reference, "reference image")->required();
  st->add_option("--out", o.out, "output directory")->required();

  auto* ip = sub("interpolate", "image strip along a line between two codes", cmd_interpolate);
  ip->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ip->add_option("--input", o.input, "input image")->required();
  ip->add_option("--from", o.from, "start: domain label or reference image")->required();
  ip->add_option("--to", o.to, "end: domain label or reference image")->required();
  ip->add_option("--steps", o.steps, "number of frames")->capture_default_str();
  ip->add_option("--t-min", o.t_min, "first t (below 0 extrapolates)")->capture_default_str();
  ip->add_option("--t-max", o.t_max, "last t (above 1 extrapolates)")->capture_default_str();
  ip->add_option("--out", o.out, "output directory")->required();

  auto* sg = sub("sample-grid", "grid with one column per domain and one row per sample", cmd_sample_grid);
  sg->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  sg->add_option("--input", o.inputs, "input image (repeatable)")->required();
  sg->add_option("--samples", o.samples, "rows per input")->capture_default_str();
  sg->add_option("--out", o.out, "output .png or directory")->required();

  auto* ev = sub("eval", "diversity, Frechet distance and probe accuracy per target domain", cmd_eval);
  config_opts(ev);
  ev->add_option("--run", o.run, "training run directory");
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint (default: the run's latest)");
  ev->add_option("--probe", o.probe, "probe classifier used as feature extractor");
  ev->add_option("--inputs", o.count, "number of input images")->capture_default_str();
  ev->add_option("--samples", o.eval_samples, "samples per input")->capture_default_str();
  ev->add_option("--out", o.out, "output directory (default: <run>/eval)");

  auto* ex = sub("export-latents", "CSV of sampled and extracted attribute codes", cmd_export_latents);
  config_opts(ex);
  ex->add_option("--run", o.run, "training run directory");
  ex->add_option("--checkpoint", o.checkpoint, "model checkpoint (default: the run's latest)");
  ex->add_option("--count", o.count, "codes of each kind per domain")->capture_default_str();
  ex->add_option("--out", o.out, "output CSV")->required();

  auto* mt = sub("make-toy", "write the synthetic multi-domain digit set", cmd_make_toy);
  mt->add_option("--out", o.out, "dataset root")->required();
  mt->add_option("--domains", o.domains, "number of domains")->capture_default_str();
  mt->add_option("--per-domain", o.per_domain, "images per domain")->capture_default_str();
  mt->add_option("--size", o.size, "image size")->capture_default_str();
  mt->add_option("--holdout", o.holdout, "held-out images per domain")->capture_default_str();

  auto* tp = sub("train-probe", "train the domain probe classifier", cmd_train_probe);
  config_opts(tp);
  tp->add_option("--run", o.run, "training run directory (for its dataset)");
  tp->add_option("--epochs", o.epochs, "passes over the training split")->capture_default_str();
  tp->add_option("--out", o.out, "output file")->capture_default_str();

  auto* sm = sub("smoke", "end-to-end toy experiment with pass/fail checks", cmd_smoke);
  sm->add_option("--out", o.out, "working directory")->required();
  sm->add_option("--iterations", o.iterations, "training iterations per model")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }
  if (!action) return exit_usage;
  try {
    return action(o, out);
  } catch (const Error& e) {
    const auto [cls, code] = classify(e.kind());
    err << "error class=" << cls << " kind=" << to_string(e.kind()) << ": " << one_line(e.what()) << std::endl;
    return code;
  } catch (const c10::Error& e) {
    err << "error class=numeric kind=tensor: " << one_line(e.what_without_backtrace()) << std::endl;
    return exit_numeric;
  } catch (const fs::filesystem_error& e) {
    err << "error class=data kind=io: " << one_line(e.what()) << std::endl;
    return exit_data;
  } catch (const std::exception& e) {
    err << "error class=internal kind=unexpected: " << one_line(e.what()) << std::endl;
    return exit_internal;
  }
}

}  // namespace gmmunit
