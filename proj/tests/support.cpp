#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

namespace gmmunit::testing {

namespace oracle {

std::vector<double> values(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous().flatten();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

double l1(const torch::Tensor& a, const torch::Tensor& b) {
  const auto va = values(a), vb = values(b);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += std::fabs(va[i] - vb[i]);
  return s / static_cast<double>(va.size());
}

double iso(const torch::Tensor& z, const torch::Tensor& z2, const torch::Tensor& a, const torch::Tensor& a2) {
  const auto n = z.size(0), d = z.size(1);
  const auto vz = values(z), vz2 = values(z2), va = values(a), va2 = values(a2);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double dz = 0.0, da = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      dz += std::fabs(vz[i * d + j] - vz2[i * d + j]);
      da += std::fabs(va[i * d + j] - va2[i * d + j]);
    }
    total += std::fabs(da - dz);
  }
  return total / static_cast<double>(n);
}

double kl_scalar(const std::vector<double>& m, const std::vector<double>& logv, const std::vector<double>& mu,
                 double sigma) {
  double s = 0.0;
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += std::exp(logv[i]) / s2 + (mu[i] - m[i]) * (mu[i] - m[i]) / s2 - 1.0 + std::log(s2) - logv[i];
  }
  return 0.5 * s;
}

double kl(const torch::Tensor& m, const torch::Tensor& logv, const torch::Tensor& mu, const torch::Tensor& sigma) {
  const auto n = m.size(0), d = m.size(1);
  const auto vm = values(m), vl = values(logv), vmu = values(mu), vs = values(sigma);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const auto k = i * d + j;
      const double s2 = vs[k] * vs[k];
      s += std::exp(vl[k]) / s2 + (vmu[k] - vm[k]) * (vmu[k] - vm[k]) / s2 - 1.0 + std::log(s2) - vl[k];
    }
    total += 0.5 * s;
  }
  return total / static_cast<double>(n);
}

std::pair<double, double> kl_monte_carlo(const std::vector<double>& m, const std::vector<double>& logv,
                                         const std::vector<double>& mu, double sigma, int64_t n, std::uint64_t seed) {
  // Antithetic pairs (eps, -eps): n draws in total, unbiased, and the part of
  // the log-ratio that is odd in eps cancels within each pair.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto d = static_cast<int64_t>(m.size());
  const auto half = torch::randn({n / 2, d}, gen, torch::kFloat64);
  const auto tm = torch::tensor(m, torch::kFloat64), tl = torch::tensor(logv, torch::kFloat64);
  const auto tmu = torch::tensor(mu, torch::kFloat64);
  const double s2 = sigma * sigma;
  auto log_ratio = [&](const torch::Tensor& eps) {
    const auto x = tm + torch::exp(0.5 * tl) * eps;
    const auto log_q = (-0.5 * tl - 0.5 * eps * eps).sum(1);
    const auto log_p = (-0.5 * std::log(s2) - (x - tmu).pow(2) / (2.0 * s2)).sum(1);
    return log_q - log_p;
  };
  const auto pairs = 0.5 * (log_ratio(half) + log_ratio(-half));
  return {pairs.mean().item<double>(), pairs.std().item<double>() / std::sqrt(static_cast<double>(n / 2))};
}

double domain_categorical(const torch::Tensor& logits, const torch::Tensor& targets) {
  const auto n = logits.size(0), k = logits.size(1);
  const auto l = values(logits), t = values(targets);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < k; ++j) mx = std::max(mx, l[i * k + j]);
    double se = 0.0;
    for (int64_t j = 0; j < k; ++j) se += std::exp(l[i * k + j] - mx);
    const double lse = mx + std::log(se);
    for (int64_t j = 0; j < k; ++j) {
      if (t[i * k + j] == 1.0) total += lse - l[i * k + j];
    }
  }
  return total / static_cast<double>(n);
}

double domain_multilabel(const torch::Tensor& logits, const torch::Tensor& targets) {
  const auto l = values(logits), t = values(targets);
  double total = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-l[i]));
    total += -(t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p));
  }
  return total / static_cast<double>(l.size());
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double mean_of(const std::vector<double>& v, const std::function<double(double)>& f) {
  double s = 0.0;
  for (double x : v) s += f(x);
  return s / static_cast<double>(v.size());
}
}  // namespace

double adv_discriminator(const torch::Tensor& real, const torch::Tensor& fake) {
  return mean_of(values(real), [](double r) { return -std::log(sigmoid(r)); }) +
         mean_of(values(fake), [](double f) { return -std::log(1.0 - sigmoid(f)); });
}

double adv_generator_saturating(const torch::Tensor& fake) {
  return mean_of(values(fake), [](double f) { return std::log(1.0 - sigmoid(f)); });
}

double adv_generator_nonsaturating(const torch::Tensor& fake) {
  return mean_of(values(fake), [](double f) { return -std::log(sigmoid(f)); });
}

double perceptual_identity(const torch::Tensor& a, const torch::Tensor& b, double eps) {
  const auto n = a.size(0), c = a.size(1), hw = a.size(2) * a.size(3);
  const auto va = values(a), vb = values(b);
  double total = 0.0;
  for (int64_t i = 0; i < n * c; ++i) {
    double ma = 0.0, mb = 0.0;
    for (int64_t p = 0; p < hw; ++p) {
      ma += va[i * hw + p];
      mb += vb[i * hw + p];
    }
    ma /= hw;
    mb /= hw;
    double sa = 0.0, sb = 0.0;
    for (int64_t p = 0; p < hw; ++p) {
      sa += (va[i * hw + p] - ma) * (va[i * hw + p] - ma);
      sb += (vb[i * hw + p] - mb) * (vb[i * hw + p] - mb);
    }
    sa = std::sqrt(sa / hw + eps);
    sb = std::sqrt(sb / hw + eps);
    for (int64_t p = 0; p < hw; ++p) {
      const double d = (va[i * hw + p] - ma) / sa - (vb[i * hw + p] - mb) / sb;
      total += d * d;
    }
  }
  return total / static_cast<double>(n * c * hw);
}

std::vector<double> pairwise_distances(const std::vector<std::vector<double>>& points) {
  std::vector<double> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
      out.push_back(std::sqrt(s));
    }
  }
  return out;
}

double trapezoid(const std::function<double(double)>& f, double lo, double hi, int64_t intervals) {
  const double h = (hi - lo) / static_cast<double>(intervals);
  double s = 0.5 * (f(lo) + f(hi));
  for (int64_t i = 1; i < intervals; ++i) s += f(lo + h * static_cast<double>(i));
  return s * h;
}

}  // namespace oracle

TinySetup tiny_setup(int image_size, int base_channels, std::uint64_t seed) {
  TinySetup s;
  s.net.image_size = image_size;
  s.net.base_channels = base_channels;
  s.net.mapping_hidden = 16;
  s.net.attr_dim = 4;
  s.net.num_domains = 3;
  s.net.reduced_depth = true;
  s.gmm = make_gmm_spec(GmmMode::categorical, s.net.code_dim(), 3, 1.0, 0.5, {"a", "b", "c"});
  s.train.batch_size = 4;
  s.train.iterations = 10;
  s.train.snapshot_every = 0;
  s.train.sample_every = 0;
  s.train.log_every = 0;
  s.train.seed = seed;
  return s;
}

Dataset random_dataset(int domains, int per_domain, int image_size, std::uint64_t seed) {
  Dataset d;
  d.mode = GmmMode::categorical;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  d.images = torch::rand({domains * per_domain, 3, image_size, image_size}, gen, torch::kFloat32) * 2 - 1;
  for (int k = 0; k < domains; ++k) d.attributes.push_back(std::string(1, static_cast<char>('a' + k)));
  for (int i = 0; i < domains * per_domain; ++i) {
    std::vector<std::uint8_t> bits(domains, 0);
    bits[i % domains] = 1;
    d.labels.push_back({bits, d.attributes[i % domains]});
    d.paths.push_back("mem" + std::to_string(i));
    d.train.push_back(i);
  }
  return d;
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("gmmunit_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) return std::numeric_limits<double>::infinity();
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.scalar_type() == b.scalar_type() && torch::equal(a, b);
}

}  // namespace gmmunit::testing
