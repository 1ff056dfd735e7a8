#include "gmmunit/config.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "gmmunit/errors.hpp"

namespace gmmunit {

namespace {

struct Key {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string text_of(bool v) { return v ? "true" : "false"; }
std::string text_of(std::int64_t v) { return std::to_string(v); }
std::string text_of(double v) { return format_double(v); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

int to_int(const std::string& v) { return static_cast<int>(parse_int(v)); }

template <class T, class Member>
Key int_key(const char* name, const char* help, Member member) {
  return {name, help, [member](RunConfig& c, const std::string& v) { member(c) = static_cast<T>(parse_int(v)); },
          [member](const RunConfig& c) { return text_of(static_cast<std::int64_t>(member(const_cast<RunConfig&>(c)))); }};
}

Key double_key(const char* name, const char* help, std::function<double&(RunConfig&)> member) {
  return {name, help, [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); },
          [member](const RunConfig& c) { return text_of(member(const_cast<RunConfig&>(c))); }};
}

Key bool_key(const char* name, const char* help, std::function<bool&(RunConfig&)> member) {
  return {name, help, [member](RunConfig& c, const std::string& v) { member(c) = to_bool(v); },
          [member](const RunConfig& c) { return text_of(member(const_cast<RunConfig&>(c))); }};
}

Key string_key(const char* name, const char* help, std::function<std::string&(RunConfig&)> member) {
  return {name, help, [member](RunConfig& c, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      string_key("dataset.root", "image root directory", [](RunConfig& c) -> std::string& { return c.dataset.root; }),
      {"dataset.labels", "folders | manifest",
       [](RunConfig& c, const std::string& v) { c.dataset.labels = parse_label_source(v); },
       [](const RunConfig& c) { return std::string(to_string(c.dataset.labels)); }},
      string_key("dataset.manifest", "manifest file name under the root",
                 [](RunConfig& c) -> std::string& { return c.dataset.manifest; }),
      int_key<int>("dataset.image_size", "square image size (multiple of 16)",
                   [](RunConfig& c) -> int& { return c.dataset.image_size; }),
      int_key<std::uint64_t>("dataset.split_seed", "train/test split seed",
                             [](RunConfig& c) -> std::uint64_t& { return c.dataset.split_seed; }),
      int_key<int>("dataset.holdout", "held-out images per domain (folders) or in total (manifest)",
                   [](RunConfig& c) -> int& { return c.dataset.holdout; }),

      string_key("gmm.mode", "auto | categorical | factorized",
                 [](RunConfig& c) -> std::string& { return c.prior.mode; }),
      double_key("gmm.radius", "distance of the component means from the origin",
                 [](RunConfig& c) -> double& { return c.prior.radius; }),
      double_key("gmm.scale", "standard deviation of every component", [](RunConfig& c) -> double& {
        return c.prior.scale;
      }),
      {"gmm.weights", "mixture weights, comma separated (empty = uniform)",
       [](RunConfig& c, const std::string& v) { c.prior.weights = v.empty() ? Vector{} : parse_doubles(v); },
       [](const RunConfig& c) { return format_doubles(c.prior.weights); }},
      string_key("gmm.groups", "mutually exclusive attribute groups, e.g. 0,1;2",
                 [](RunConfig& c) -> std::string& { return c.prior.groups; }),

      int_key<int>("net.base_channels", "width of the first convolution",
                   [](RunConfig& c) -> int& { return c.net.base_channels; }),
      int_key<int>("net.style_blocks", "attribute blocks C", [](RunConfig& c) -> int& { return c.net.style_blocks; }),
      int_key<int>("net.attr_dim", "size Z of one attribute block", [](RunConfig& c) -> int& { return c.net.attr_dim; }),
      bool_key("net.reduced_depth", "shallower content encoder and discriminator",
               [](RunConfig& c) -> bool& { return c.net.reduced_depth; }),
      bool_key("net.attention", "attention head composing output and input",
               [](RunConfig& c) -> bool& { return c.net.attention; }),
      bool_key("net.attention_guidance", "extra guidance channel for the attention head",
               [](RunConfig& c) -> bool& { return c.net.attention_guidance; }),
      int_key<int>("net.mapping_hidden", "hidden width of the code-to-AdaIN mapping",
                   [](RunConfig& c) -> int& { return c.net.mapping_hidden; }),

      double_key("loss.s_rec", "self-reconstruction weight", [](RunConfig& c) -> double& { return c.weights.s_rec; }),
      double_key("loss.cyc", "cycle weight", [](RunConfig& c) -> double& { return c.weights.cyc; }),
      double_key("loss.kl", "KL weight", [](RunConfig& c) -> double& { return c.weights.kl; }),
      double_key("loss.iso", "isometry weight", [](RunConfig& c) -> double& { return c.weights.iso; }),
      double_key("loss.perc", "perceptual weight (needs a feature extractor)",
                 [](RunConfig& c) -> double& { return c.weights.perc; }),
      double_key("loss.c_rec", "content reconstruction weight", [](RunConfig& c) -> double& { return c.weights.c_rec; }),
      double_key("loss.a_rec", "attribute reconstruction weight",
                 [](RunConfig& c) -> double& { return c.weights.a_rec; }),

      int_key<int>("train.batch_size", "images per step", [](RunConfig& c) -> int& { return c.train.batch_size; }),
      int_key<std::int64_t>("train.iterations", "total steps",
                            [](RunConfig& c) -> std::int64_t& { return c.train.iterations; }),
      double_key("train.lr", "initial learning rate", [](RunConfig& c) -> double& { return c.train.base_lr; }),
      int_key<std::int64_t>("train.lr_half_every", "steps between learning-rate halvings",
                            [](RunConfig& c) -> std::int64_t& { return c.train.lr_half_every; }),
      int_key<std::int64_t>("train.snapshot_every", "checkpoint cadence (0 = only at the end)",
                            [](RunConfig& c) -> std::int64_t& { return c.train.snapshot_every; }),
      int_key<std::int64_t>("train.sample_every", "sample grid cadence (0 = never)",
                            [](RunConfig& c) -> std::int64_t& { return c.train.sample_every; }),
      int_key<std::int64_t>("train.log_every", "console log cadence (0 = quiet)",
                            [](RunConfig& c) -> std::int64_t& { return c.train.log_every; }),
      bool_key("train.mirror", "random horizontal mirroring", [](RunConfig& c) -> bool& { return c.train.mirror; }),
      {"train.attr_point", "mean | reparameterized: code extracted from a real image",
       [](RunConfig& c, const std::string& v) {
         if (v == "mean") {
           c.train.attr_point = AttributePointMode::mean;
         } else if (v == "reparameterized") {
           c.train.attr_point = AttributePointMode::reparameterized;
         } else {
           throw ConfigError("expected mean or reparameterized, got '" + v + "'");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.attr_point == AttributePointMode::mean ? "mean" : "reparameterized");
       }},
      {"train.adv", "saturating | nonsaturating generator loss",
       [](RunConfig& c, const std::string& v) { c.train.adv_flavor = parse_adv_flavor(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.adv_flavor)); }},
      bool_key("train.exhaustive_targets", "translate every item to every domain (at most 3)",
               [](RunConfig& c) -> bool& { return c.train.exhaustive_targets; }),
      {"train.variant", "full | sigma0 | no-cyc | no-attr-rec | no-iso | no-disent",
       [](RunConfig& c, const std::string& v) { c.train.variant = parse_variant(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.variant)); }},

      int_key<std::uint64_t>("seed", "run seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }),
      string_key("out", "output directory", [](RunConfig& c) -> std::string& { return c.out; }),
  };
  return table;
}

std::vector<std::vector<int>> parse_groups(const std::string& text) {
  std::vector<std::vector<int>> groups;
  if (trim(text).empty()) return groups;
  for (const auto& part : split(text, ';')) {
    std::vector<int> g;
    for (const auto& item : split(part, ',')) g.push_back(to_int(trim(item)));
    groups.push_back(std::move(g));
  }
  return groups;
}

void check_ranges(const RunConfig& c, std::vector<std::string>& problems) {
  auto expect = [&problems](bool ok, const std::string& message) {
    if (!ok) problems.push_back(message);
  };
  expect(c.dataset.image_size >= 16 && c.dataset.image_size % 16 == 0,
         "dataset.image_size must be a positive multiple of 16");
  expect(c.dataset.holdout >= 0, "dataset.holdout must be >= 0");
  expect(c.prior.mode == "auto" || c.prior.mode == "categorical" || c.prior.mode == "factorized",
         "gmm.mode must be auto, categorical or factorized");
  expect(c.prior.radius > 0.0 && std::isfinite(c.prior.radius), "gmm.radius must be positive");
  expect(c.prior.scale >= 0.0 && std::isfinite(c.prior.scale), "gmm.scale must be >= 0");
  for (double w : c.prior.weights) expect(w > 0.0 && std::isfinite(w), "gmm.weights must be positive");
  expect(c.net.base_channels >= 1, "net.base_channels must be >= 1");
  expect(c.net.style_blocks >= 1, "net.style_blocks must be >= 1");
  expect(c.net.attr_dim >= 1, "net.attr_dim must be >= 1");
  expect(c.net.mapping_hidden >= 1, "net.mapping_hidden must be >= 1");
  expect(!c.net.attention_guidance || c.net.attention, "net.attention_guidance needs net.attention");
  for (double w : {c.weights.s_rec, c.weights.cyc, c.weights.kl, c.weights.iso, c.weights.perc, c.weights.c_rec,
                   c.weights.a_rec}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      problems.push_back("loss weights must be finite and >= 0");
      break;
    }
  }
  try {
    c.train.validate();
  } catch (const ConfigError& e) {
    for (const auto& m : split(e.what(), ';')) problems.push_back(trim(m));
  }
  try {
    parse_groups(c.prior.groups);
  } catch (const Error&) {
    problems.push_back("gmm.groups must look like 0,1;2");
  }
}

}  // namespace

std::string config_reference() {
  const RunConfig defaults;
  std::ostringstream out;
  for (const auto& k : keys()) out << "# " << k.help << '\n' << k.name << " = " << k.get(defaults) << '\n';
  return out.str();
}

RunConfig parse_run_config(const KeyValueDoc& doc) {
  RunConfig config;
  std::vector<std::string> problems;
  for (const auto& [key, value] : doc.entries()) {
    const Key* match = nullptr;
    for (const auto& k : keys()) {
      if (key == k.name) match = &k;
    }
    if (!match) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      match->set(config, value);
    } catch (const Error& e) {
      problems.push_back(key + ": " + e.what());
    } catch (const std::exception& e) {
      problems.push_back(key + ": malformed value '" + value + "'");
    }
  }
  check_ranges(config, problems);
  config.net.image_size = config.dataset.image_size;
  if (!problems.empty()) {
    throw ConfigError("invalid configuration (" + std::to_string(problems.size()) + " problems): " +
                      join(problems, "; "));
  }
  return config;
}

KeyValueDoc to_document(const RunConfig& config) {
  KeyValueDoc doc;
  for (const auto& k : keys()) doc.set(k.name, k.get(config));
  return doc;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueDoc doc = path.empty() ? KeyValueDoc{} : KeyValueDoc::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    doc.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  return parse_run_config(doc);
}

GmmSpec resolve_prior(const RunConfig& config, const std::vector<std::string>& attributes) {
  GmmMode mode = config.dataset.labels == LabelSource::folders ? GmmMode::categorical : GmmMode::factorized;
  if (config.prior.mode != "auto") mode = parse_gmm_mode(config.prior.mode);
  if (mode == GmmMode::categorical && config.dataset.labels == LabelSource::manifest) {
    throw ConfigError("a categorical prior needs folder labels");
  }
  if (mode == GmmMode::factorized && config.dataset.labels == LabelSource::folders) {
    throw ConfigError("a factorized prior needs manifest labels");
  }
  const int n = static_cast<int>(attributes.size());
  auto spec = make_gmm_spec(mode, config.net.code_dim(), n, config.prior.radius, config.prior.scale, attributes);
  if (!config.prior.weights.empty()) spec.weights = config.prior.weights;
  spec.groups = parse_groups(config.prior.groups);
  build_gmm(spec);  // validates
  return spec;
}

}  // namespace gmmunit
