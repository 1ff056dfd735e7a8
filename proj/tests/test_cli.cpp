#include "doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmmunit/commands.hpp"
#include "gmmunit/config.hpp"
#include "gmmunit/errors.hpp"
#include "gmmunit/evaluation.hpp"
#include "support.hpp"

using namespace gmmunit;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gmmunit");
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A toy dataset plus a two-iteration run of the given variant, built once per process.
const std::string& tiny_run(const std::string& variant) {
  static std::map<std::string, std::string> runs;
  auto it = runs.find(variant);
  if (it != runs.end()) return it->second;
  const auto root = testing::temp_dir("cli_" + variant);
  const auto toy = cli({"make-toy", "--out", root + "/data", "--domains", "3", "--per-domain", "6", "--size", "16",
                        "--holdout", "2"});
  REQUIRE(toy.code == 0);
  std::ofstream(root + "/run.cfg") << toy.out
                                   << "net.base_channels = 4\nnet.reduced_depth = true\nnet.mapping_hidden = 16\n"
                                      "net.attr_dim = 4\ntrain.batch_size = 3\ntrain.iterations = 2\n"
                                      "train.sample_every = 0\ntrain.log_every = 0\n";
  const auto run = root + "/run";
  const auto r = cli({"train", "--config", root + "/run.cfg", "--out", run, "--variant", variant});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return runs.emplace(variant, run).first->second;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults and document round trip") {
    RunConfig c;
    c.net.attr_dim = 6;
    c.weights.cyc = 3.5;
    c.train.variant = Variant::no_iso;
    c.dataset.root = "somewhere";
    const auto back = parse_run_config(to_document(c));
    CHECK(back.net.attr_dim == 6);
    CHECK(back.weights.cyc == 3.5);
    CHECK(back.train.variant == Variant::no_iso);
    CHECK(back.dataset.root == "somewhere");
    CHECK(to_document(back).format() == to_document(c).format());
    CHECK(config_reference().find("train.lr_half_every = 200000") != std::string::npos);
    const auto defaults = parse_run_config(KeyValueDoc::parse(""));
    CHECK(defaults.weights.s_rec == 10.0);
    CHECK(defaults.weights.kl == 0.1);
    CHECK(defaults.train.base_lr == 1e-4);
  }

  TEST_CASE("every problem is reported at once") {
    try {
      parse_run_config(KeyValueDoc::parse("bogus = 1\nnet.base_channels = -3\ntrain.lr = fast\n"));
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("3 problems") != std::string::npos);
      CHECK(msg.find("bogus") != std::string::npos);
      CHECK(msg.find("train.lr") != std::string::npos);
      CHECK(msg.find("base_channels") != std::string::npos);
    }
  }

  TEST_CASE("prior follows the label source") {
    RunConfig c;
    c.net.attr_dim = 4;
    const auto cat = resolve_prior(c, {"a", "b", "c"});
    CHECK(cat.mode == GmmMode::categorical);
    CHECK(cat.components == 3);
    c.dataset.labels = LabelSource::manifest;
    const auto fac = resolve_prior(c, {"x", "y"});
    CHECK(fac.mode == GmmMode::factorized);
    c.prior.mode = "categorical";
    CHECK_THROWS_AS(resolve_prior(c, {"x", "y"}), ConfigError);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("error lines and exit codes") {
    const auto unknown = cli({"frobnicate"});
    CHECK(unknown.code == exit_usage);

    const auto dir = testing::temp_dir("cli_errors");
    std::ofstream(dir + "/bad.cfg") << "bogus = 1\nloss.cyc = -1\n";
    const auto bad = cli({"train", "--config", dir + "/bad.cfg", "--out", dir + "/run"});
    CHECK(bad.code == exit_config);
    CHECK(bad.err.rfind("error class=config kind=config: invalid configuration (2 problems)", 0) == 0);
    CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);
    CHECK_FALSE(fs::exists(dir + "/run"));

    std::ofstream(dir + "/junk.bin") << "not a checkpoint";
    const auto ck = cli({"translate", "--checkpoint", dir + "/junk.bin", "--input", dir + "/x.png", "--domain", "a",
                         "--out", dir + "/t"});
    CHECK(ck.code == exit_checkpoint);
    CHECK(ck.err.rfind("error class=checkpoint", 0) == 0);

    const auto run = tiny_run("full");
    const auto missing = cli({"translate", "--checkpoint", run + "/checkpoints/latest.bin", "--input",
                              dir + "/absent.png", "--domain", "d1_tinted", "--out", dir + "/t"});
    CHECK(missing.code == exit_data);
    CHECK(missing.err.rfind("error class=data", 0) == 0);
  }

  TEST_CASE("train snapshots the effective configuration") {
    const auto run = tiny_run("full");
    CHECK(fs::exists(run + "/config.txt"));
    CHECK(fs::exists(run + "/prior.txt"));
    CHECK(fs::exists(run + "/losses.csv"));
    const auto cfg = load_run_config(run + "/config.txt", {});
    CHECK(cfg.train.iterations == 2);
    CHECK(cfg.net.base_channels == 4);
  }

  TEST_CASE("deterministic translation is byte-identical across runs") {
    const auto run = tiny_run("sigma0");
    const auto dir = testing::temp_dir("cli_translate");
    fs::path input;
    for (const auto& e : fs::recursive_directory_iterator(fs::path(run).parent_path() / "data")) {
      if (e.path().extension() == ".png") {
        input = e.path();
        break;
      }
    }
    REQUIRE_FALSE(input.empty());
    for (const char* out : {"a", "b"}) {
      const auto r = cli({"translate", "--checkpoint", run + "/checkpoints/latest.bin", "--input", input.string(),
                          "--domain", "d2_textured", "--samples", "1", "--out", dir + "/" + out});
      REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    CHECK(bytes(dir + "/a/sample_00.png") == bytes(dir + "/b/sample_00.png"));
    CHECK_FALSE(bytes(dir + "/a/sample_00.png").empty());
  }

  TEST_CASE("interpolation with equal endpoints") {
    const auto run = tiny_run("full");
    const auto dir = testing::temp_dir("cli_interp");
    fs::path input;
    for (const auto& e : fs::recursive_directory_iterator(fs::path(run).parent_path() / "data")) {
      if (e.path().extension() == ".png") input = e.path();
    }
    const auto r = cli({"interpolate", "--checkpoint", run + "/checkpoints/latest.bin", "--input", input.string(),
                        "--from", "d1_tinted", "--to", "d1_tinted", "--steps", "5", "--out", dir});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto first = bytes(dir + "/frame_00.png");
    for (int i = 1; i < 5; ++i) CHECK(bytes(dir + "/frame_0" + std::to_string(i) + ".png") == first);
    CHECK(fs::exists(dir + "/strip.png"));

    const auto ext = cli({"interpolate", "--checkpoint", run + "/checkpoints/latest.bin", "--input", input.string(),
                          "--from", "d0_plain", "--to", "d2_textured", "--steps", "3", "--t-min", "0", "--t-max",
                          "1.5", "--out", dir + "/ext"});
    REQUIRE_MESSAGE(ext.code == 0, ext.err);
    std::ifstream csv(dir + "/ext/strip.csv");
    std::string header, row;
    std::getline(csv, header);
    std::vector<std::string> rows;
    while (std::getline(csv, row)) rows.push_back(row);
    REQUIRE(rows.size() == 3);
    CHECK(rows.back().find(",1") != std::string::npos);
  }

  TEST_CASE("other commands produce their artifacts") {
    const auto run = tiny_run("full");
    const auto dir = testing::temp_dir("cli_misc");
    fs::path a, b;
    for (const auto& e : fs::recursive_directory_iterator(fs::path(run).parent_path() / "data")) {
      if (e.path().extension() != ".png") continue;
      (a.empty() ? a : b) = e.path();
    }
    const auto ckpt = run + "/checkpoints/latest.bin";
    CHECK(cli({"style-transfer", "--checkpoint", ckpt, "--input", a.string(), "--reference", b.string(), "--out",
               dir + "/st"})
              .code == 0);
    CHECK(fs::exists(dir + "/st/output.png"));
    CHECK(cli({"sample-grid", "--checkpoint", ckpt, "--input", a.string(), "--input", b.string(), "--samples", "2",
               "--out", dir + "/grid.png"})
              .code == 0);
    CHECK(fs::exists(dir + "/grid.png"));
    const auto ex = cli({"export-latents", "--run", run, "--count", "2", "--out", dir + "/lat.csv"});
    CHECK(ex.code == 0);
    CHECK(read_latents(dir + "/lat.csv").size() == 12);

    // Rerunning gives the same artifact.
    CHECK((cli({"export-latents", "--run", run, "--count", "2", "--out", dir + "/lat2.csv"}).code == 0));
    CHECK(bytes(dir + "/lat.csv") == bytes(dir + "/lat2.csv"));
  }
}
