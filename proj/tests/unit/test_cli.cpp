#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tegan/cli.hpp"
#include "tegan/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tegan::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// One small dataset, oracle and checkpoint shared by the CLI cases.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "tegan_cli_ws";
  fs::path data = root / "ds";
  fs::path oracle = root / "oracle.pt";
  fs::path run_dir = root / "run";
  fs::path config = root / "small.cfg";
  fs::path ckpt = run_dir / "final.ckpt";
  fs::path input = data / "images" / "test_000000_x.png";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    REQUIRE(run({"data-synth", "--out", data.string(), "--count", "64", "--test-count", "16", "--seed", "7",
                 "--canvas", "16"})
                .code == 0);
    REQUIRE(run({"train-oracle", "--out", oracle.string(), "--count", "256", "--val-count", "64", "--epochs", "1",
                 "--canvas", "16", "--seed", "1"})
                .code == 0);
    std::ofstream(config) << "dataset = ds\nepochs = 1\nbatch_size = 16\nbase_channels = 4\neval_count = 8\n";
    REQUIRE(run({"train", "--config", config.string(), "--out", run_dir.string()}).code == 0);
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2, help exits 0") {
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--version"}).out == std::string(tegan::cli::version()) + "\n");
    CHECK(run({"data-synth"}).code == 2);
    CHECK(run({"data-synth", "--out", "x", "--count", "abc"}).code == 2);
  }

  TEST_CASE("data-synth determinism and validation") {
    const auto root = fs::temp_directory_path() / "tegan_cli_synth";
    fs::remove_all(root);
    CHECK(run({"data-synth", "--out", (root / "a").string(), "--count", "64", "--seed", "7"}).code == 0);
    CHECK(run({"data-synth", "--out", (root / "b").string(), "--count", "64", "--seed", "7"}).code == 0);
    CHECK(slurp(root / "a" / "attrs.txt") == slurp(root / "b" / "attrs.txt"));
    CHECK(slurp(root / "a" / "images" / "train_000005_y.png") == slurp(root / "b" / "images" / "train_000005_y.png"));
    CHECK(fs::exists(root / "a" / "run_manifest.json"));

    CHECK(run({"data-synth", "--out", (root / "h").string(), "--count", "8", "--holdout", "0,1;2,4"}).code == 0);
    const auto manifest = load_json(root / "h" / "manifest.json");
    CHECK(manifest["holdout_signatures"] == json::parse("[[0,1],[2,4]]"));
    CHECK(manifest["seed"] == 0);

    CHECK(run({"data-synth", "--out", (root / "z").string(), "--count", "0"}).code == 2);
    CHECK(run({"data-synth", "--out", (root / "z").string(), "--holdout", "0;9"}).code == 2);
    CHECK(run({"data-synth", "--out", "/proc/tegan_cannot_write", "--count", "4"}).code == 2);

    setenv("TEGAN_SEED", "7", 1);
    CHECK(run({"data-synth", "--out", (root / "env").string(), "--count", "64"}).code == 0);
    unsetenv("TEGAN_SEED");
    CHECK(slurp(root / "env" / "attrs.txt") == slurp(root / "a" / "attrs.txt"));
    fs::remove_all(root);
  }

  TEST_CASE("train outputs, resume and config errors") {
    auto& ws = workspace();
    CHECK(fs::exists(ws.run_dir / "checkpoints" / "epoch_0001.ckpt"));
    CHECK(fs::exists(ws.run_dir / "run_manifest.json"));
    CHECK(fs::exists(ws.run_dir / "metrics.json"));
    std::ifstream log(ws.run_dir / "train_log.jsonl");
    std::vector<json> records;
    for (std::string line; std::getline(log, line);) records.push_back(json::parse(line));
    CHECK(records.size() >= 1);

    // Resume for a second epoch continues the step numbering.
    std::ofstream(ws.root / "two.cfg") << "dataset = ds\nepochs = 2\nbatch_size = 16\nbase_channels = 4\neval_count = 0\n";
    const auto resumed = ws.root / "resumed";
    CHECK(run({"train", "--config", (ws.root / "two.cfg").string(), "--out", resumed.string(), "--resume",
               (ws.run_dir / "checkpoints" / "epoch_0001.ckpt").string()})
              .code == 0);
    std::ifstream rlog(resumed / "train_log.jsonl");
    std::string first;
    std::getline(rlog, first);
    CHECK(json::parse(first)["step"] == 4);

    std::ofstream(ws.root / "missing.cfg") << "dataset = nowhere\nepochs = 1\n";
    CHECK(run({"train", "--config", (ws.root / "missing.cfg").string(), "--out", (ws.root / "m").string()}).code == 2);
    std::ofstream(ws.root / "bad.cfg") << "dataset = ds\nlambda = -1\n";
    CHECK(run({"train", "--config", (ws.root / "bad.cfg").string(), "--out", (ws.root / "m").string()}).code == 2);
    CHECK(run({"train", "--config", (ws.root / "nope.cfg").string(), "--out", (ws.root / "m").string()}).code == 2);
  }

  TEST_CASE("divergent training exits 3 and keeps the last checkpoint") {
    auto& ws = workspace();
    std::ofstream(ws.root / "diverge.cfg")
        << "dataset = ds\nepochs = 30\nbatch_size = 16\nbase_channels = 4\neval_count = 0\nlearning_rate = 1e30\n";
    const auto out = ws.root / "diverged";
    const auto r = run({"train", "--config", (ws.root / "diverge.cfg").string(), "--out", out.string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("diverged") != std::string::npos);
  }

  TEST_CASE("translate") {
    auto& ws = workspace();
    const auto out = ws.root / "tr";
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", "0,0,0,0,0", "--out",
               (out / "zero.png").string()})
              .code == 0);
    CHECK(fs::exists(out / "zero.png.manifest.json"));
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--flip", "size", "--out",
               (out / "flip.png").string()})
              .code == 0);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--flip", "size,shape",
               "--oracle", ws.oracle.string(), "--out", (out / "flip2.png").string()})
              .code == 0);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", "0,0,0,0", "--out",
               (out / "x.png").string()})
              .code == 2);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--flip", "smile", "--out",
               (out / "x.png").string()})
              .code == 2);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", "0,0,0,0,0", "--flip",
               "size", "--out", (out / "x.png").string()})
              .code == 2);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--out",
               (out / "x.png").string()})
              .code == 2);
    CHECK(run({"translate", "--ckpt", (ws.root / "none.ckpt").string(), "--input", ws.input.string(), "--t",
               "0,0,0,0,0", "--out", (out / "x.png").string()})
              .code == 2);
  }

  TEST_CASE("sample") {
    auto& ws = workspace();
    auto sample = [&](const std::string& dir, std::vector<std::string> extra) {
      std::vector<std::string> args{"sample", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--out",
                                    (ws.root / dir).string()};
      args.insert(args.end(), extra.begin(), extra.end());
      return run(args).code;
    };
    CHECK(sample("s1", {"--n", "4", "--source", "prior", "--seed", "1"}) == 0);
    CHECK(sample("s2", {"--n", "4", "--source", "prior", "--seed", "1"}) == 0);
    CHECK(slurp(ws.root / "s1" / "grid.png") == slurp(ws.root / "s2" / "grid.png"));
    const auto grid = tegan::read_png(ws.root / "s1" / "grid.png");
    CHECK(grid.size(1) == 32);  // 2 x 2 tiles of 16 x 16
    CHECK(grid.size(2) == 32);
    CHECK(fs::exists(ws.root / "s1" / "sample_003.png"));
    CHECK(sample("s3", {"--n", "3", "--source", "posterior", "--ref", (ws.data / "images" / "test_000000_y.png").string()}) == 0);
    CHECK(sample("s4", {"--n", "0"}) == 2);
    CHECK(sample("s5", {"--source", "posterior"}) == 2);
    CHECK(sample("s6", {"--source", "other"}) == 2);
  }

  TEST_CASE("interpolate") {
    auto& ws = workspace();
    auto interp = [&](const std::string& dir, const std::string& t, const std::string& alphas) {
      return run({"interpolate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", t, "--alphas", alphas,
                  "--out", (ws.root / dir).string()})
          .code;
    };
    CHECK(interp("i5", "0,1,0,0,-1", "0,0.25,0.5,0.75,1") == 0);
    for (int i = 0; i < 5; ++i) CHECK(fs::exists(ws.root / "i5" / ("alpha_00" + std::to_string(i) + ".png")));
    CHECK(interp("i0", "0,1,0,0,-1", "0") == 0);
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", "0,0,0,0,0", "--out",
               (ws.root / "zero.png").string()})
              .code == 0);
    CHECK(slurp(ws.root / "i0" / "alpha_000.png") == slurp(ws.root / "zero.png"));
    CHECK(run({"translate", "--ckpt", ws.ckpt.string(), "--input", ws.input.string(), "--t", "0,1,0,0,-1", "--out",
               (ws.root / "full.png").string()})
              .code == 0);
    CHECK(slurp(ws.root / "i5" / "alpha_004.png") == slurp(ws.root / "full.png"));
    CHECK(interp("ibad", "0,1,0,0,-1", "0,x") == 2);
    CHECK(interp("ibad", "0,1,0,0,-1", "") == 2);
  }

  TEST_CASE("eval") {
    auto& ws = workspace();
    auto eval = [&](const std::string& report, const std::string& oracle) {
      return run({"eval", "--ckpt", ws.ckpt.string(), "--data", ws.data.string(), "--oracle", oracle, "--report",
                  (ws.root / report).string(), "--seed", "3"})
          .code;
    };
    CHECK(eval("r1.json", ws.oracle.string()) == 0);
    CHECK(eval("r2.json", ws.oracle.string()) == 0);
    const auto report = load_json(ws.root / "r1.json");
    for (const char* key : {"ssim_self", "ssim_translate", "psnr_self", "psnr_translate", "frechet_distance",
                            "attr_acc_seen", "attr_acc_unseen", "trans_recons_error"}) {
      CHECK(report.contains(key));
    }
    CHECK(slurp(ws.root / "r1.json") == slurp(ws.root / "r2.json"));
    CHECK(fs::exists(ws.root / "r1.json.manifest.json"));
    CHECK(eval("r3.json", (ws.root / "no_oracle.pt").string()) == 2);
  }

  TEST_CASE("the installed binary reports exit codes") {
    CHECK(std::system((std::string(TEGAN_CLI_PATH) + " --version > /dev/null").c_str()) == 0);
    const int status = std::system((std::string(TEGAN_CLI_PATH) + " data-synth --out /tmp/x --count 0 2> /dev/null").c_str());
    CHECK(WEXITSTATUS(status) == 2);
  }
}
