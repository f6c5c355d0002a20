#include "tegan/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tegan/data.hpp"
#include "tegan/errors.hpp"
#include "tegan/image_io.hpp"
#include "tegan/metrics.hpp"
#include "tegan/rng.hpp"
#include "tegan/training.hpp"

#ifndef TEGAN_VERSION
#define TEGAN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace tegan::cli {

const char* version() noexcept { return TEGAN_VERSION; }

namespace {

class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;

  json to_json() const {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream stamp;
    stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    return {{"command", command_}, {"config", config},          {"seed", seed},
            {"artifacts", artifacts}, {"tool_version", version()}, {"duration_seconds", elapsed},
            {"timestamp", stamp.str()}};
  }

  // Directory outputs get run_manifest.json; file outputs get <file>.manifest.json.
  void write_for_dir(const fs::path& dir) const { write(dir / "run_manifest.json"); }
  void write_for_file(const fs::path& file) const { write(file.string() + ".manifest.json"); }

 private:
  void write(const fs::path& path) const {
    std::ofstream out(path);
    out << to_json().dump(2) << '\n';
    if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  }

  std::string command_;
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TEGAN_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (env[pos] != '\0') throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("TEGAN_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return 0;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(item, &pos));
      if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (values.empty()) throw ConfigError(std::string(what) + " is empty");
  return values;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

fs::path resolve_relative(const std::string& path, const fs::path& base) {
  const fs::path p(path);
  if (p.is_absolute() || fs::exists(p) || base.empty()) return p;
  return base / p;
}

struct LoadedModel {
  TrainState state;
  Translator model;
};

LoadedModel load_model(const std::string& ckpt) {
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint '" + ckpt + "' does not exist");
  auto state = load_checkpoint(ckpt);
  auto model = state.translator();
  return {std::move(state), std::move(model)};
}

torch::Tensor load_input(const std::string& path, const NetworkConfig& config) {
  if (!fs::exists(path)) throw ConfigError("input image '" + path + "' does not exist");
  auto x = read_png(path);
  if (x.size(1) != config.height || x.size(2) != config.width) {
    throw DimensionError("input image is " + std::to_string(x.size(1)) + "x" + std::to_string(x.size(2)) +
                         ", checkpoint expects " + std::to_string(config.height) + "x" + std::to_string(config.width));
  }
  return x.unsqueeze(0);
}

torch::Tensor transition_tensor(const std::vector<double>& values, const NetworkConfig& config) {
  if (static_cast<std::int64_t>(values.size()) != config.transition_dim) {
    throw DimensionError("transition has " + std::to_string(values.size()) + " entries, checkpoint expects " +
                         std::to_string(config.transition_dim));
  }
  return torch::tensor(std::vector<float>(values.begin(), values.end())).unsqueeze(0);
}

torch::Tensor generate(LoadedModel& m, const torch::Tensor& x, const torch::Tensor& t) {
  torch::NoGradGuard no_grad;
  return m.model.generate(x, t);
}

// Current attributes of an image: attrs.txt next to it or one level up, else the oracle.
AttributeVector current_attributes(const fs::path& image, const std::string& oracle_path, const torch::Tensor& x,
                                   std::vector<std::string>& names) {
  for (const auto& dir : {image.parent_path(), image.parent_path().parent_path()}) {
    const auto attrs = dir / "attrs.txt";
    if (dir.empty() || !fs::exists(attrs)) continue;
    const auto table = load_attr_file(attrs);
    for (const auto& [name, bits] : table.rows) {
      if (name == image.filename().string()) {
        names = table.names;
        return bits;
      }
    }
  }
  if (oracle_path.empty()) {
    throw ConfigError("--flip needs the input listed in an attrs.txt or an --oracle to infer its attributes");
  }
  auto oracle = OracleClassifier::load(oracle_path);
  names = oracle.attribute_names();
  return oracle.predict(x).front();
}

void write_report(const fs::path& path, const json& report) {
  ensure_parent(path);
  std::ofstream out(path);
  out << report.dump(2) << '\n';
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

std::string indexed_name(const char* prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(3) << std::setfill('0') << i << ".png";
  return os.str();
}

std::vector<double> row_values(const torch::Tensor& row) {
  const auto r = row.to(torch::kFloat64).contiguous();
  return {r.data_ptr<double>(), r.data_ptr<double>() + r.numel()};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transition-encoding image translation: data, training, translation and evaluation", "tegan"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed (falls back to TEGAN_SEED, then 0)"); };

  // data-synth
  auto* synth = app.add_subcommand("data-synth", "Render a synthetic shapes dataset");
  std::string synth_out, holdout_text;
  std::int64_t synth_count = 4096, synth_test = 512, synth_canvas = 32;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Training triplets");
  synth->add_option("--test-count", synth_test, "Test triplets");
  synth->add_option("--canvas", synth_canvas, "Square canvas side in pixels");
  synth->add_option("--holdout", holdout_text, "Held-out index groups, e.g. \"0,1;2,4\"");
  add_seed(synth);

  // train
  auto* train = app.add_subcommand("train", "Run two-phase training");
  std::string config_path, train_out, resume_path;
  train->add_option("--config", config_path, "Key = value config file")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--resume", resume_path, "Checkpoint to resume from");
  add_seed(train);

  // train-oracle
  auto* toracle = app.add_subcommand("train-oracle", "Train the frozen attribute oracle used by eval");
  std::string oracle_out;
  OracleConfig ocfg;
  std::int64_t oracle_canvas = 32;
  toracle->add_option("--out", oracle_out, "Oracle archive path")->required();
  toracle->add_option("--count", ocfg.train_count, "Rendered training images");
  toracle->add_option("--val-count", ocfg.val_count, "Rendered validation images");
  toracle->add_option("--epochs", ocfg.epochs, "Training epochs");
  toracle->add_option("--canvas", oracle_canvas, "Square canvas side in pixels");
  add_seed(toracle);

  // translate
  auto* translate = app.add_subcommand("translate", "Apply G(x, t) to one image");
  std::string ckpt, input, t_text, flip_text, out_path, oracle_path;
  translate->add_option("--ckpt", ckpt, "Checkpoint")->required();
  translate->add_option("--input", input, "Input PNG")->required();
  auto* t_opt = translate->add_option("--t", t_text, "Comma-separated transition");
  auto* flip_opt = translate->add_option("--flip", flip_text, "Comma-separated attribute names to flip");
  translate->add_option("--out", out_path, "Output PNG")->required();
  translate->add_option("--oracle", oracle_path, "Oracle used when the input has no attrs.txt entry");

  // sample
  auto* sample = app.add_subcommand("sample", "Translate with sampled transitions");
  std::int64_t sample_n = 4;
  std::string source = "prior", ref, sample_out;
  sample->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sample->add_option("--input", input, "Input PNG")->required();
  sample->add_option("--n", sample_n, "Number of draws");
  sample->add_option("--source", source, "prior or posterior")->check(CLI::IsMember({"prior", "posterior"}));
  sample->add_option("--ref", ref, "Reference PNG y for the posterior E(x, y)");
  sample->add_option("--out", sample_out, "Output directory")->required();
  add_seed(sample);

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Translate along alpha * t");
  std::string alphas_text = "0,0.25,0.5,0.75,1", interp_out;
  interp->add_option("--ckpt", ckpt, "Checkpoint")->required();
  interp->add_option("--input", input, "Input PNG")->required();
  interp->add_option("--t", t_text, "Comma-separated transition")->required();
  interp->add_option("--alphas", alphas_text, "Comma-separated scales");
  interp->add_option("--out", interp_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  std::string data_dir, report_path;
  std::int64_t eval_count = -1;
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--oracle", oracle_path, "Oracle archive")->required();
  eval->add_option("--report", report_path, "Report JSON path")->required();
  eval->add_option("--count", eval_count, "Test triplets to evaluate (-1 for all)");
  add_seed(eval);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "tegan: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      if (synth_count < 1) throw ConfigError("--count must be >= 1");
      if (synth_test < 0) throw ConfigError("--test-count must be >= 0");
      Manifest manifest("data-synth");
      SyntheticConfig sc;
      sc.train_count = synth_count;
      sc.test_count = synth_test;
      sc.seed = resolve_seed(seed);
      sc.canvas = {synth_canvas, synth_canvas};
      if (!holdout_text.empty()) sc.holdout = HoldoutSpec::parse(holdout_text, kShapeAttributeCount);
      ensure_dir(synth_out);
      const auto split = generate_synthetic(sc);
      manifest.seed = sc.seed;
      manifest.config = {{"count", synth_count},
                         {"test_count", synth_test},
                         {"canvas", synth_canvas},
                         {"holdout", sc.holdout.to_string()}};
      manifest.artifacts = {"images", "attrs.txt", "manifest.json"};
      write_dataset(synth_out, split, {{"run", manifest.to_json()}});
      manifest.artifacts.push_back("run_manifest.json");
      manifest.write_for_dir(synth_out);
      out << "wrote " << split.train.size() << " train / " << split.test.size() << " test triplets to " << synth_out
          << '\n';
      return kExitOk;
    }

    if (train->parsed()) {
      Manifest manifest("train");
      if (!fs::exists(config_path)) throw ConfigError("config file '" + config_path + "' does not exist");
      auto config = TrainConfig::load(config_path);
      if (seed) config.seed = *seed;
      const auto config_dir = fs::path(config_path).parent_path();
      if (config.dataset.empty()) throw ConfigError("config does not name a dataset");
      config.dataset = resolve_relative(config.dataset, config_dir).string();
      if (!fs::is_directory(config.dataset)) throw ConfigError("dataset '" + config.dataset + "' does not exist");
      if (!config.oracle.empty()) config.oracle = resolve_relative(config.oracle, config_dir).string();
      ensure_dir(train_out);
      if (config.checkpoint_dir.empty()) config.checkpoint_dir = (fs::path(train_out) / "checkpoints").string();
      if (config.log_dir.empty()) config.log_dir = train_out;
      config.validate();

      const auto split = load_dataset(config.dataset);
      std::optional<TrainState> resume;
      if (!resume_path.empty()) {
        if (!fs::exists(resume_path)) throw ConfigError("checkpoint '" + resume_path + "' does not exist");
        resume = load_checkpoint(resume_path);
        if (resume->config.base_channels != config.base_channels ||
            resume->config.transition_dim != config.transition_dim) {
          throw ConfigError("--resume checkpoint was trained with a different network configuration");
        }
        resume->config = config;
      }
      const auto result = fit(config, split, std::move(resume));
      MetricsReport final_metrics;
      if (!result.epoch_metrics.empty()) final_metrics = result.epoch_metrics.back();
      write_report(fs::path(train_out) / "metrics.json", final_metrics.to_json());
      save_checkpoint(fs::path(train_out) / "final.ckpt", result.state);

      manifest.seed = config.seed;
      manifest.config = json::object();
      std::istringstream cfg(config.to_text());
      for (std::string line; std::getline(cfg, line);) {
        const auto eq = line.find(" = ");
        manifest.config[line.substr(0, eq)] = line.substr(eq + 3);
      }
      manifest.artifacts = {config.checkpoint_dir, (fs::path(config.log_dir) / "train_log.jsonl").string(),
                            (fs::path(train_out) / "metrics.json").string(),
                            (fs::path(train_out) / "final.ckpt").string()};
      manifest.write_for_dir(train_out);
      out << "trained to step " << result.state.step << " (epoch " << result.state.epoch << ")\n";
      return kExitOk;
    }

    if (toracle->parsed()) {
      Manifest manifest("train-oracle");
      ocfg.seed = resolve_seed(seed);
      ocfg.canvas = {oracle_canvas, oracle_canvas};
      ensure_parent(oracle_out);
      auto [oracle, report] = train_oracle(ocfg);
      oracle.save(oracle_out);
      manifest.seed = ocfg.seed;
      manifest.config = {{"count", ocfg.train_count},
                         {"val_count", ocfg.val_count},
                         {"epochs", ocfg.epochs},
                         {"canvas", oracle_canvas},
                         {"feature_dim", ocfg.feature_dim},
                         {"validation", report.to_json()}};
      manifest.artifacts = {oracle_out};
      manifest.write_for_file(oracle_out);
      out << "oracle min per-attribute accuracy " << report.min_accuracy << '\n';
      return kExitOk;
    }

    if (translate->parsed()) {
      if ((t_opt->count() > 0) == (flip_opt->count() > 0)) {
        throw ConfigError("translate needs exactly one of --t and --flip");
      }
      Manifest manifest("translate");
      auto m = load_model(ckpt);
      const auto& nc = m.state.nets.config;
      const auto x = load_input(input, nc);
      torch::Tensor t;
      if (t_opt->count() > 0) {
        t = transition_tensor(parse_list(t_text, "--t"), nc);
      } else {
        std::vector<std::string> names;
        const auto attrs = current_attributes(input, oracle_path, x, names);
        std::vector<double> values(attrs.size(), 0.0);
        std::stringstream ss(flip_text);
        for (std::string name; std::getline(ss, name, ',');) {
          const auto it = std::find(names.begin(), names.end(), name);
          if (it == names.end()) throw ConfigError("unknown attribute '" + name + "'");
          const auto k = static_cast<std::size_t>(it - names.begin());
          values[k] = -attrs[k];  // half of the attribute difference
        }
        t = transition_tensor(values, nc);
      }
      ensure_parent(out_path);
      write_png(out_path, generate(m, x, t).squeeze(0));
      manifest.config = {{"ckpt", ckpt}, {"input", input}, {"t", row_values(t[0])}};
      manifest.artifacts = {out_path};
      manifest.write_for_file(out_path);
      return kExitOk;
    }

    if (sample->parsed()) {
      if (sample_n < 1) throw ConfigError("--n must be >= 1");
      if (source == "posterior" && ref.empty()) throw ConfigError("--source posterior needs --ref");
      Manifest manifest("sample");
      manifest.seed = resolve_seed(seed);
      auto m = load_model(ckpt);
      const auto& nc = m.state.nets.config;
      const auto x = load_input(input, nc);
      auto gen = make_generator(derive_seed(manifest.seed, streams::kCli));
      torch::Tensor t;
      {
        torch::NoGradGuard no_grad;
        if (source == "prior") {
          t = sample_prior(sample_n, nc.transition_dim, gen).values;
        } else {
          const auto y = load_input(ref, nc);
          const auto post = m.model.encode(x, y);
          const auto eps = torch::randn({sample_n, nc.transition_dim}, gen);
          t = sample_posterior(TransitionPosterior{post.mean.expand({sample_n, -1}), post.log_var.expand({sample_n, -1})},
                               eps)
                  .values;
        }
      }
      const auto images = generate(m, x.expand({sample_n, -1, -1, -1}), t);
      ensure_dir(sample_out);
      for (std::int64_t i = 0; i < sample_n; ++i) {
        const auto name = indexed_name("sample", static_cast<std::size_t>(i));
        write_png(fs::path(sample_out) / name, images[i]);
        manifest.artifacts.push_back(name);
      }
      write_png(fs::path(sample_out) / "grid.png", tile_grid(images));
      manifest.artifacts.push_back("grid.png");
      json draws = json::array();
      for (std::int64_t i = 0; i < sample_n; ++i) draws.push_back(row_values(t[i]));
      manifest.config = {{"ckpt", ckpt}, {"input", input}, {"n", sample_n}, {"source", source}, {"ref", ref},
                         {"transitions", draws}};
      manifest.write_for_dir(sample_out);
      return kExitOk;
    }

    if (interp->parsed()) {
      Manifest manifest("interpolate");
      const auto alphas = parse_list(alphas_text, "--alphas");
      auto m = load_model(ckpt);
      const auto& nc = m.state.nets.config;
      const auto x = load_input(input, nc);
      const auto t = transition_tensor(parse_list(t_text, "--t"), nc);
      ensure_dir(interp_out);
      for (std::size_t i = 0; i < alphas.size(); ++i) {
        const auto name = indexed_name("alpha", i);
        write_png(fs::path(interp_out) / name, generate(m, x, t * alphas[i]).squeeze(0));
        manifest.artifacts.push_back(name);
      }
      manifest.config = {{"ckpt", ckpt}, {"input", input}, {"t", t_text}, {"alphas", alphas}};
      manifest.write_for_dir(interp_out);
      return kExitOk;
    }

    if (eval->parsed()) {
      Manifest manifest("eval");
      if (!fs::exists(oracle_path)) throw ConfigError("oracle '" + oracle_path + "' does not exist");
      if (!fs::is_directory(data_dir)) throw ConfigError("dataset '" + data_dir + "' does not exist");
      manifest.seed = resolve_seed(seed);
      auto m = load_model(ckpt);
      const auto oracle = OracleClassifier::load(oracle_path);
      const auto split = load_dataset(data_dir);
      const auto report =
          evaluate(m.model, &oracle, split.test, split.holdout, EvalOptions{eval_count, 64, manifest.seed});
      write_report(report_path, report.to_json());
      manifest.config = {{"ckpt", ckpt}, {"data", data_dir}, {"oracle", oracle_path}, {"count", eval_count}};
      manifest.artifacts = {report_path};
      manifest.write_for_file(report_path);
      out << report.to_json().dump(2) << '\n';
      return kExitOk;
    }
    return kExitUsage;
  } catch (const TrainingDivergence& e) {
    err << "tegan: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const NumericError& e) {
    err << "tegan: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const StateError& e) {
    err << "tegan: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const Error& e) {
    // Remaining library errors stem from invalid flags, configs or input files.
    err << "tegan: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "tegan: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace tegan::cli
