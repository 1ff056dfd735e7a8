// Acceptance runner: one PASS/FAIL line per criterion.
//
//   gmmunit_acceptance [--criterion N]... [--smoke-dir DIR]

#include <torch/torch.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gmmunit/checkpoint.hpp"
#include "gmmunit/commands.hpp"
#include "gmmunit/data.hpp"
#include "gmmunit/evaluation.hpp"
#include "gmmunit/gmm.hpp"
#include "gmmunit/networks.hpp"
#include "gmmunit/objectives.hpp"
#include "gmmunit/optimizer.hpp"
#include "gmmunit/smoke.hpp"
#include "gmmunit/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace gmmunit;
namespace oracle = gmmunit::testing::oracle;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  // Records a named sub-check and folds it into the verdict.
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok " : "FAILED ") + what);
  }
};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1: numerics

Outcome criterion_numerics() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();

  double worst_ratio = 0.0;
  int cases = 0;
  for (int z = 1; z <= 8; ++z) {
    for (int k = 2; k <= z + 1; ++k) {
      const auto d = oracle::pairwise_distances(build_simplex_means(k, z, 1.0));
      const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
      worst_ratio = std::max(worst_ratio, std::fabs(*hi / *lo - 1.0));
      ++cases;
    }
  }
  o.check(worst_ratio <= 1e-9, "simplex equidistance over " + std::to_string(cases) + " (K, Z) pairs, worst |ratio-1| " +
                                   num(worst_ratio));

  // Z = 1 cannot hold three simplex vertices, so the one-dimensional mixture
  // is built by hand with unequal weights and scales.
  AttributeGmm line;
  line.dim = 1;
  line.means = {{-1.0}, {0.0}, {1.5}};
  line.scales = {0.5, 0.3, 0.8};
  line.weights = {0.2, 0.3, 0.5};
  line.attributes = {"a", "b", "c"};
  const double mass1 = oracle::trapezoid([&](double x) { return gmm_density({x}, line); }, -50.0, 50.0, 200000);
  o.check(std::fabs(mass1 - 1.0) <= 1e-3, "density mass Z=1 K=3 " + num(mass1));

  const auto plane = build_gmm(make_gmm_spec(GmmMode::categorical, 2, 3, 1.0, 0.5));
  const double mass2 = oracle::trapezoid(
      [&](double x) { return oracle::trapezoid([&](double y) { return gmm_density({x, y}, plane); }, -6.0, 6.0, 600); },
      -6.0, 6.0, 600);
  o.check(std::fabs(mass2 - 1.0) <= 1e-3, "density mass Z=2 K=3 " + num(mass2));

  // KL depends only on v / sigma^2 and (m - mu) / sigma, so the posterior
  // variance is drawn within one nat of the component variance.
  Rng rng(11);
  double worst_kl = 0.0, worst_se = 0.0, worst_z = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int d = c == 0 ? 1 : 1 + static_cast<int>(rng.index(8));
    const double sigma = c == 0 ? 1.0 : 0.5 + rng.uniform();
    Vector m(d), logv(d), mu(d);
    for (int i = 0; i < d; ++i) {
      m[i] = c == 0 ? 0.0 : 2.0 * rng.uniform() - 1.0;
      mu[i] = c == 0 ? 1.0 : 2.0 * rng.uniform() - 1.0;
      logv[i] = c == 0 ? 0.0 : std::log(sigma * sigma) + 2.0 * rng.uniform() - 1.0;
    }
    const double closed = kl_diag_gaussian(m, logv, mu, sigma);
    if (c == 0) o.check(closed == 0.5, "one-dimensional unit offset gives 0.5");
    const auto [mc, se] = oracle::kl_monte_carlo(m, logv, mu, sigma, 1000000, 1000 + c);
    worst_kl = std::max(worst_kl, std::fabs(closed - mc));
    worst_se = std::max(worst_se, se);
    worst_z = std::max(worst_z, std::fabs(closed - mc) / se);
  }
  o.check(worst_kl < 0.01 && worst_z <= 4.0,
          "closed-form KL vs 1e6-sample Monte Carlo, 100 cases, worst |delta| " + num(worst_kl) +
              ", largest standard error " + num(worst_se) + ", worst |delta| / se " + num(worst_z));

  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  const auto feats = torch::randn({500, 6}, gen, torch::kFloat64);
  const double fd0 = frechet_distance({feats, "x"}, {feats.clone(), "x"});
  o.check(std::fabs(fd0) < 1e-6, "Frechet on identical sets " + num(fd0));

  const auto shift = torch::tensor({1.0, -1.0, 0.5, 2.0}, torch::kFloat64);
  const double expected = shift.pow(2).sum().item<double>();
  const auto a = torch::randn({100000, 4}, gen, torch::kFloat64);
  const auto b = torch::randn({100000, 4}, gen, torch::kFloat64) + shift;
  const double fd = frechet_distance({a, "x"}, {b, "x"});
  o.check(std::fabs(fd - expected) <= 0.05 * expected,
          "Frechet of shifted Gaussians " + num(fd) + " vs " + num(expected));

  const double secs = seconds_since(t0);
  o.check(secs < 120.0, "runtime " + num(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 2: loss oracles

class TwoLayerExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "two-layer"; }
  std::vector<torch::Tensor> layers(const torch::Tensor& x) override {
    return {x, torch::avg_pool2d(torch::tanh(x), 2)};
  }
};

Outcome criterion_loss_oracles() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(21);
  const auto f64 = torch::kFloat64;
  auto close = [&](double got, double want, const std::string& what) {
    o.check(std::fabs(got - want) <= 1e-6, what + " |delta| " + num(std::fabs(got - want)));
  };
  for (int round = 0; round < 5; ++round) {
    const auto n = 2 + round, d = 3 + round;
    const auto img_a = torch::rand({n, 3, 8, 8}, gen, f64) * 2 - 1;
    const auto img_b = torch::rand({n, 3, 8, 8}, gen, f64) * 2 - 1;
    const auto code_a = torch::randn({n, 4 * d, 2, 2}, gen, f64);
    const auto code_b = torch::randn({n, 4 * d, 2, 2}, gen, f64);
    const auto z = torch::randn({n, d}, gen, f64), z2 = torch::randn({n, d}, gen, f64);
    const auto a = torch::randn({n, d}, gen, f64), a2 = torch::randn({n, d}, gen, f64);
    const std::string tag = " (round " + std::to_string(round) + ")";

    close(loss_self_rec(img_a, img_b).item<double>(), oracle::l1(img_a, img_b), "self reconstruction" + tag);
    close(loss_cycle(img_a, img_b).item<double>(), oracle::l1(img_a, img_b), "cycle" + tag);
    close(loss_content_rec(code_a, code_b).item<double>(), oracle::l1(code_a, code_b), "content reconstruction" + tag);
    close(loss_attr_rec(z, a).item<double>(), oracle::l1(z, a), "attribute reconstruction" + tag);
    close(loss_iso(z, z2, a, a2).item<double>(), oracle::iso(z, z2, a, a2), "isometry" + tag);

    const AttributePosterior post{torch::randn({n, d}, gen, f64), torch::randn({n, d}, gen, f64)};
    const auto mean = torch::randn({n, d}, gen, f64);
    const auto scale = torch::rand({n, d}, gen, f64) + 0.3;
    close(loss_kl(post, mean, scale).item<double>(), oracle::kl(post.mean, post.logvar, mean, scale), "KL" + tag);

    const auto gmm = build_gmm(make_gmm_spec(GmmMode::categorical, d, 3, 1.0, 0.4));
    std::vector<DomainLabel> labels;
    std::vector<Vector> mus;
    for (int i = 0; i < n; ++i) {
      labels.push_back(label_for_component(gmm, i % 3));
      mus.push_back(gmm.means[i % 3]);
    }
    close(loss_kl(post, labels, gmm).item<double>(),
          oracle::kl(post.mean, post.logvar, codes_to_tensor(mus, f64), torch::full({n, d}, 0.4, f64)),
          "KL to GMM components" + tag);

    const auto logits = torch::randn({n, 3}, gen, f64) * 3;
    const auto onehot = labels_to_tensor(labels, f64);
    close(loss_domain(logits, onehot, DomainLossMode::categorical).item<double>(),
          oracle::domain_categorical(logits, onehot), "categorical domain" + tag);
    const auto bits = (torch::rand({n, 4}, gen, f64) > 0.5).to(f64);
    const auto logits4 = torch::randn({n, 4}, gen, f64) * 3;
    close(loss_domain(logits4, bits, DomainLossMode::multilabel).item<double>(),
          oracle::domain_multilabel(logits4, bits), "multi-label domain" + tag);

    const auto rf_real = torch::randn({n, 1, 2, 2}, gen, f64) * 2;
    const auto rf_fake = torch::randn({n, 1, 2, 2}, gen, f64) * 2;
    close(loss_adv(rf_real, rf_fake, AdvSide::discriminator, AdvFlavor::nonsaturating).item<double>(),
          oracle::adv_discriminator(rf_real, rf_fake), "adversarial D" + tag);
    close(loss_adv(rf_real, rf_fake, AdvSide::discriminator, AdvFlavor::saturating).item<double>(),
          oracle::adv_discriminator(rf_real, rf_fake), "adversarial D (saturating run)" + tag);
    close(loss_adv({}, rf_fake, AdvSide::generator, AdvFlavor::saturating).item<double>(),
          oracle::adv_generator_saturating(rf_fake), "adversarial G saturating" + tag);
    close(loss_adv({}, rf_fake, AdvSide::generator, AdvFlavor::nonsaturating).item<double>(),
          oracle::adv_generator_nonsaturating(rf_fake), "adversarial G non-saturating" + tag);

    TwoLayerExtractor two;
    const double want = 0.5 * (oracle::perceptual_identity(img_a, img_b) +
                               oracle::perceptual_identity(torch::avg_pool2d(torch::tanh(img_a), 2),
                                                           torch::avg_pool2d(torch::tanh(img_b), 2)));
    close(loss_perceptual(img_a, img_b, &two).item<double>(), want, "perceptual" + tag);
  }

  std::map<std::string, double> ones;
  for (const auto& name : term_names()) ones[name] = 1.0;
  const double lg = total_objectives(ones, LossWeights{}).g;
  o.check(lg == 24.2, "all-ones L_G with default weights = " + num(lg) + (lg == 24.2 ? " (exact)" : " (not exact)"));

  const double secs = seconds_since(t0);
  o.check(secs < 120.0, "runtime " + num(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 3: gradients

struct GradReport {
  double coordinate_error = 0.0;   // ||analytic - numeric|| / ||numeric|| over probed coordinates
  double directional_error = 0.0;  // random-direction derivative
  int coordinates = 0;
};

GradReport gradient_check(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss_fn,
                          std::uint64_t seed) {
  const double h = 1e-6;
  const auto loss = loss_fn();
  const auto grads = torch::autograd::grad({loss}, params, {}, false, false, true);
  Rng rng(seed);
  auto eval = [&]() {
    torch::NoGradGuard no_grad;
    return loss_fn().item<double>();
  };
  GradReport r;
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto flat = params[p].detach().view({-1});
    const auto g = grads[p].defined() ? grads[p].contiguous().view({-1}) : torch::zeros_like(flat);
    for (int k = 0; k < 3; ++k) {
      const auto i = static_cast<int64_t>(rng.index(static_cast<std::size_t>(flat.numel())));
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = eval();
      flat[i] = orig - h;
      const double down = eval();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = g[i].item<double>();
      diff2 += (analytic - numeric) * (analytic - numeric);
      ref2 += numeric * numeric;
      ++r.coordinates;
    }
  }
  r.coordinate_error = std::sqrt(diff2 / ref2);

  std::vector<torch::Tensor> dirs;
  double analytic_dir = 0.0;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed + 1);
  double norm2 = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    dirs.push_back(torch::randn(params[p].sizes(), gen, params[p].scalar_type()));
    norm2 += dirs[p].pow(2).sum().item<double>();
  }
  // Unit direction, so the step matches the per-coordinate one and stays clear of kinks.
  for (std::size_t p = 0; p < params.size(); ++p) {
    dirs[p].div_(std::sqrt(norm2));
    if (grads[p].defined()) analytic_dir += (grads[p] * dirs[p]).sum().item<double>();
  }
  auto shift = [&](double s) {
    torch::NoGradGuard no_grad;
    for (std::size_t p = 0; p < params.size(); ++p) params[p].add_(dirs[p], s);
  };
  shift(h);
  const double up = eval();
  shift(-2 * h);
  const double down = eval();
  shift(h);
  const double numeric_dir = (up - down) / (2 * h);
  r.directional_error = std::fabs(analytic_dir - numeric_dir) / std::max(std::fabs(numeric_dir), 1e-12);
  return r;
}

struct GradCase {
  std::string name;
  bool attention = false;
  bool factorized = false;
  AttributePointMode point = AttributePointMode::mean;
  AdvFlavor flavor = AdvFlavor::nonsaturating;
};

void gradient_case(const GradCase& c, Outcome& o) {
  auto setup = testing::tiny_setup(16, 8, 31);
  setup.net.attention = c.attention;
  setup.train.mirror = false;
  setup.train.attr_point = c.point;
  setup.train.adv_flavor = c.flavor;
  setup.weights.perc = 0.0;
  std::vector<DomainLabel> labels;
  if (c.factorized) {
    setup.net.num_domains = 2;
    setup.gmm = make_gmm_spec(GmmMode::factorized, setup.net.code_dim(), 2, 1.0, 0.5, {"p", "q"});
  }
  auto state = make_train_state(setup.net, setup.gmm, setup.weights, setup.train, torch::kFloat64);
  const auto all = enumerate_labels(state.gmm);
  for (int i = 0; i < 4; ++i) labels.push_back(all[i % all.size()]);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(77);
  const auto images = torch::rand({4, 3, 16, 16}, gen, torch::kFloat32) * 2 - 1;
  const auto samples = draw_step_samples(state, 4);
  const auto batch = prepare_batch(state, images, labels, samples);

  const auto g_params = state.nets.generator_side_parameters();
  const auto d_params = state.nets.discriminator_parameters();
  for (auto& p : d_params) p.set_requires_grad(false);
  const auto rg = gradient_check(
      g_params, [&] { return total_generator_objective(generator_terms(state, batch, samples), state.weights); }, 5);
  for (auto& p : d_params) p.set_requires_grad(true);
  o.check(rg.coordinate_error < 1e-4 && rg.directional_error < 1e-4,
          c.name + " L_G: " + std::to_string(rg.coordinates) + " coordinates rel " + num(rg.coordinate_error) +
              ", directional rel " + num(rg.directional_error));

  const auto rd = gradient_check(
      d_params,
      [&] {
        const auto t = discriminator_terms(state, batch, samples);
        return t.at(term::adv_d) + t.at(term::dom_d);
      },
      6);
  o.check(rd.coordinate_error < 1e-4 && rd.directional_error < 1e-4,
          c.name + " L_D: " + std::to_string(rd.coordinates) + " coordinates rel " + num(rd.coordinate_error) +
              ", directional rel " + num(rd.directional_error));
}

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  gradient_case({"plain", false, false, AttributePointMode::mean, AdvFlavor::nonsaturating}, o);
  gradient_case({"attention+reparameterized+factorized", true, true, AttributePointMode::reparameterized,
                 AdvFlavor::saturating},
                o);
  const double secs = seconds_since(t0);
  o.check(secs < 600.0, "runtime " + num(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 4: contracts

std::vector<LossReport> run_steps(TrainState& state, const Dataset& data, int steps) {
  std::vector<LossReport> out;
  for (int s = 0; s < steps; ++s) {
    const auto idx = sample_batch_indices(data, state.train.batch_size, state.rng);
    out.push_back(train_step(state, data.batch(idx), data.labels_of(idx)).report);
  }
  return out;
}

bool reports_identical(const LossReport& a, const LossReport& b) {
  return a.iteration == b.iteration && a.terms == b.terms && a.loss_d == b.loss_d && a.loss_g == b.loss_g &&
         a.d_applied == b.d_applied && a.g_applied == b.g_applied && a.status == b.status;
}

double reports_gap(const LossReport& a, const LossReport& b) {
  if (a.iteration != b.iteration || a.terms.size() != b.terms.size()) return INFINITY;
  double gap = std::max(std::fabs(a.loss_d - b.loss_d), std::fabs(a.loss_g - b.loss_g));
  for (const auto& [k, v] : a.terms) {
    if (!b.terms.count(k)) return INFINITY;
    gap = std::max(gap, std::fabs(v - b.terms.at(k)));
  }
  return gap;
}

Outcome criterion_contracts() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);

  {
    const auto a = torch::rand({2, 3, 8, 8}, gen) * 2 - 1;
    const auto b = torch::rand({2, 3, 8, 8}, gen) * 2 - 1;
    const auto ones = torch::ones({2, 1, 8, 8}), zeros = torch::zeros({2, 1, 8, 8});
    const bool id1 = testing::bit_equal(compose_attention(a, b, ones), b);
    const bool id0 = testing::bit_equal(compose_attention(a, b, zeros), a);
    const auto mid = compose_attention(-torch::ones({2, 3, 8, 8}), torch::ones({2, 3, 8, 8}), ones * 0.5);
    const bool idh = testing::bit_equal(mid, torch::zeros({2, 3, 8, 8}));
    o.check(id1 && id0 && idh, "attention compose: m=1 gives b, m=0 gives a, m=0.5 of (-1, 1) gives 0");
  }

  {
    double lo = 0.0, hi = 0.0;
    for (bool attention : {false, true}) {
      auto setup = testing::tiny_setup(32, 4, 9);
      setup.net.attention = attention;
      Networks nets(setup.net, 9);
      torch::NoGradGuard no_grad;
      const auto x = torch::rand({4, 3, 32, 32}, gen) * 2 - 1;
      for (double zs : {0.0, 1.0, 100.0, 1e6}) {
        const auto z = torch::randn({4, setup.net.code_dim()}, gen) * zs;
        const auto y = translate(nets, x, content_of(nets, x), z);
        lo = std::min(lo, y.min().item<double>());
        hi = std::max(hi, y.max().item<double>());
      }
    }
    o.check(lo >= -1.0 && hi <= 1.0, "generator range [" + num(lo) + ", " + num(hi) + "]");
  }

  const auto data = testing::random_dataset(3, 8, 16, 4);
  auto setup = testing::tiny_setup(16, 4, 13);

  {
    auto state = make_train_state(setup.net, setup.gmm, setup.weights, setup.train);
    run_steps(state, data, 3);
    const auto path = testing::temp_dir("acceptance_ckpt") + "/state.bin";
    checkpoint_save(state, path);
    auto loaded = checkpoint_load(path);
    torch::NoGradGuard no_grad;
    const auto x = data.batch({0, 1, 2});
    const auto z = torch::randn({3, setup.net.code_dim()}, gen);
    const auto y0 = translate(state.nets, x, content_of(state.nets, x), z);
    const auto y1 = translate(loaded.nets, x, content_of(loaded.nets, x), z);
    const auto p0 = encode_attributes(state.nets, x), p1 = encode_attributes(loaded.nets, x);
    const auto d0 = discriminate(state.nets, x), d1 = discriminate(loaded.nets, x);
    const bool same = testing::bit_equal(y0, y1) && testing::bit_equal(p0.mean, p1.mean) &&
                      testing::bit_equal(p0.logvar, p1.logvar) && testing::bit_equal(d0.rf_map, d1.rf_map) &&
                      testing::bit_equal(d0.domain_logits, d1.domain_logits);
    o.check(same && loaded.rng.state() == state.rng.state() && loaded.iteration == state.iteration,
            "checkpoint round trip gives a bit-identical forward pass");
  }

  std::vector<LossReport> first;
  {
    auto a = make_train_state(setup.net, setup.gmm, setup.weights, setup.train);
    auto b = make_train_state(setup.net, setup.gmm, setup.weights, setup.train);
    first = run_steps(a, data, 200);
    const auto second = run_steps(b, data, 200);
    bool same = first.size() == second.size();
    for (std::size_t i = 0; same && i < first.size(); ++i) same = reports_identical(first[i], second[i]);
    bool healthy = true;
    for (const auto& r : first) healthy = healthy && r.status == "ok";
    o.check(same && healthy, "200-step loss stream bit-identical across two runs with one seed");
  }

  {
    auto c = make_train_state(setup.net, setup.gmm, setup.weights, setup.train);
    run_steps(c, data, 100);
    const auto path = testing::temp_dir("acceptance_resume") + "/state.bin";
    checkpoint_save(c, path);
    auto resumed = checkpoint_load(path);
    const auto tail = run_steps(resumed, data, 100);
    double gap = 0.0;
    for (std::size_t i = 0; i < tail.size(); ++i) gap = std::max(gap, reports_gap(first[100 + i], tail[i]));
    o.check(gap <= 1e-6, "resume at step 100 matches the uninterrupted run, max gap " + num(gap));
  }

  {
    // The same through run_training and its run directory.
    auto cfg = setup;
    cfg.train.iterations = 40;
    cfg.train.snapshot_every = 10;
    const auto straight_dir = testing::temp_dir("acceptance_run_straight");
    const auto split_dir = testing::temp_dir("acceptance_run_split");
    auto straight = make_train_state(cfg.net, cfg.gmm, cfg.weights, cfg.train);
    run_training(straight, data, straight_dir);
    auto half = cfg;
    half.train.iterations = 25;
    auto part = make_train_state(half.net, half.gmm, half.weights, half.train);
    run_training(part, data, split_dir);
    auto rest = make_train_state(cfg.net, cfg.gmm, cfg.weights, cfg.train);
    run_training(rest, data, split_dir);
    auto rows = [](const std::string& dir) {
      std::ifstream in(dir + "/losses.csv");
      std::vector<LossReport> out;
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) out.push_back(LossReport::parse_csv_row(line));
      return out;
    };
    const auto ra = rows(straight_dir), rb = rows(split_dir);
    double gap = ra.size() == rb.size() && ra.size() == 40 ? 0.0 : INFINITY;
    for (std::size_t i = 0; std::isfinite(gap) && i < ra.size(); ++i) gap = std::max(gap, reports_gap(ra[i], rb[i]));
    o.check(gap <= 1e-6, "run directory resumed at 25 of 40 matches, max gap " + num(gap));
  }

  const double secs = seconds_since(t0);
  o.check(secs < 300.0, "runtime " + num(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 5: smoke

Outcome criterion_smoke(const std::string& dir) {
  Outcome o;
  SmokeSettings settings;
  settings.dir = dir;
  const auto report = run_smoke(settings, SmokeThresholds{}, &std::cerr);
  for (const auto& c : report.checks) o.check(c.pass, c.name + ": " + c.detail);
  if (report.checks.size() != 4) o.check(false, "expected four smoke checks");
  return o;
}

// ---------------------------------------------------------------------------
// 6: export and protocol

int cli(const std::vector<std::string>& args, std::string* captured = nullptr) {
  std::vector<std::string> full = {"gmmunit"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out, err;
  const int rc = run_command(full, out, err);
  if (captured) *captured = out.str();
  if (rc != 0) std::cerr << err.str();
  return rc;
}

Outcome criterion_protocol() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = testing::temp_dir("acceptance_protocol");
  std::string toy_lines;
  o.check(cli({"make-toy", "--out", root + "/data", "--domains", "3", "--per-domain", "12", "--size", "16",
               "--holdout", "4"},
              &toy_lines) == 0,
          "make-toy");
  {
    std::ofstream cfg(root + "/run.cfg");
    cfg << toy_lines
        << "net.base_channels = 4\nnet.reduced_depth = true\nnet.mapping_hidden = 16\nnet.attr_dim = 4\n"
           "train.batch_size = 4\ntrain.iterations = 3\ntrain.snapshot_every = 0\ntrain.sample_every = 0\n"
           "train.log_every = 0\nseed = 17\n";
  }
  const auto run = root + "/run";
  o.check(cli({"train", "--config", root + "/run.cfg", "--out", run}) == 0, "train a tiny run");
  const int inputs = 4, samples = 3;
  o.check(cli({"eval", "--run", run, "--inputs", std::to_string(inputs), "--samples", std::to_string(samples),
               "--seed", "5"}) == 0,
          "eval");

  const auto metrics = read_metrics_csv(run + "/eval/metrics.csv");
  IdentityExtractor identity;
  int compared = 0;
  double worst = 0.0;
  for (const auto& row : metrics) {
    if (row.metric != "diversity") continue;
    std::vector<torch::Tensor> per_input;
    for (int n = 0; n < inputs; ++n) {
      std::vector<torch::Tensor> images;
      for (int s = 0; s < samples; ++s) {
        std::ostringstream name;
        name << std::setw(4) << std::setfill('0') << n << '_' << std::setw(2) << s << ".png";
        images.push_back(read_image(run + "/eval/samples/" + row.target + "/" + name.str(), 16));
      }
      per_input.push_back(torch::stack(images));
    }
    const auto again = diversity_score(per_input, identity);
    worst = std::max({worst, std::fabs(again.mean - row.value) / std::max(1e-12, std::fabs(row.value)),
                      std::fabs(again.std - row.std) / std::max(1e-12, std::fabs(row.std))});
    ++compared;
  }
  o.check(compared == 3 && worst <= 1e-9, "diversity recomputed from " + std::to_string(compared) +
                                              " sample folders, worst relative gap " + num(worst));

  {
    std::vector<LatentRow> rows;
    Rng rng(3);
    const Vector awkward = {0.1, -0.0, 1e-300, 4.9e-324, 1.7976931348623157e308, M_PI, -2.0 / 3.0, 123456789.125};
    rows.push_back({"a", "sampled", awkward});
    for (int i = 0; i < 50; ++i) {
      Vector v(8);
      for (auto& x : v) x = rng.normal() * std::pow(10.0, static_cast<double>(rng.index(20)) - 10.0);
      rows.push_back({i % 2 ? "b" : "c", i % 3 ? "sampled" : "extracted", v});
    }
    const auto path = root + "/latents.csv";
    export_latents(rows, path);
    const auto back = read_latents(path);
    bool same = back.size() == rows.size();
    for (std::size_t i = 0; same && i < rows.size(); ++i) {
      same = back[i].label == rows[i].label && back[i].source == rows[i].source &&
             back[i].code.size() == rows[i].code.size();
      for (std::size_t k = 0; same && k < rows[i].code.size(); ++k) {
        same = std::memcmp(&back[i].code[k], &rows[i].code[k], sizeof(double)) == 0;
      }
    }
    o.check(same, "latent export round trip is bit-exact over " + std::to_string(rows.size()) + " rows");

    o.check(cli({"export-latents", "--run", run, "--count", "4", "--out", root + "/cli_latents.csv"}) == 0,
            "export-latents command");
    const auto cli_rows = read_latents(root + "/cli_latents.csv");
    o.check(cli_rows.size() == 24, "export-latents wrote " + std::to_string(cli_rows.size()) + " of 24 rows");
  }

  const std::vector<std::pair<std::int64_t, double>> breakpoints = {
      {0, 1e-4}, {199999, 1e-4}, {200000, 5e-5}, {399999, 5e-5}, {400000, 2.5e-5}, {600000, 1.25e-5}};
  bool exact = true;
  for (const auto& [it, want] : breakpoints) exact = exact && lr_at(it) == want;
  o.check(exact, "learning-rate breakpoints at 0, 2e5, 4e5, 6e5 iterations");

  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime " + num(secs) + " s");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  std::string smoke_dir;
  if (const char* env = std::getenv("GMMUNIT_SMOKE_DIR")) smoke_dir = env;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 6));
  app.add_option("--smoke-dir", smoke_dir, "working directory of the smoke experiment");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6};
  if (smoke_dir.empty()) smoke_dir = "smoke";

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"numerics", criterion_numerics}},
      {2, {"loss oracles", criterion_loss_oracles}},
      {3, {"gradients", criterion_gradients}},
      {4, {"contracts", criterion_contracts}},
      {5, {"smoke training", [&] { return criterion_smoke(smoke_dir); }}},
      {6, {"export and protocol", criterion_protocol}},
  };
  bool all = true;
  for (int id : selected) {
    const auto& [name, fn] = criteria.at(id);
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.check(false, std::string("exception: ") + e.what());
    }
    for (const auto& note : r.notes) std::cout << "  [" << id << "] " << note << '\n';
    std::cout << "criterion " << id << " (" << name << "): " << (r.pass ? "PASS" : "FAIL") << std::endl;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
