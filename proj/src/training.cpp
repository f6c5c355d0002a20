#include "tegan/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "tegan/archive.hpp"
#include "tegan/rng.hpp"

namespace fs = std::filesystem;

namespace tegan {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Runs `fn` with the given parameters excluded from autograd.
template <typename Fn>
auto without_param_grads(const std::vector<torch::Tensor>& params, Fn&& fn) {
  for (auto p : params) p.set_requires_grad(false);
  struct Restore {
    const std::vector<torch::Tensor>& ps;
    ~Restore() {
      for (auto p : ps) p.set_requires_grad(true);
    }
  } restore{params};
  return fn();
}

void check_isolation(const TrainState& state, std::uint64_t before_other, const std::vector<torch::Tensor>& other,
                     const char* what) {
  if (!state.config.verify_param_isolation) return;
  if (parameter_hash(other) != before_other) {
    throw StateError(std::string(what) + " update modified parameters it does not own");
  }
}

void require_batch(const TrainState& state, const TripletBatch& batch) {
  if (batch.size() < 2) throw DataError("training batch needs at least 2 triplets");
  require_image_batch(batch.x, state.nets.config, "training batch x");
  require_image_batch(batch.y, state.nets.config, "training batch y");
  require_transition_batch(batch.t, state.nets.config, "training batch t");
}

struct StepContext {
  torch::Generator gen;
  WrongTriplets wrong;
  torch::Tensor x, y, t;
  std::int64_t batch;
  torch::TensorOptions options;  // dtype of the networks
};

StepContext begin_step(TrainState& state, const TripletBatch& batch) {
  require_batch(state, batch);
  std::mt19937_64 rng(derive_seed(state.config.seed, streams::kWrongTriplets, static_cast<std::uint64_t>(state.step)));
  const auto dtype = state.nets.generator->parameters().front().scalar_type();
  StepContext ctx{make_generator(derive_seed(state.config.seed, streams::kStepNoise, static_cast<std::uint64_t>(state.step))),
                  make_wrong_triplets(batch, rng), batch.x.to(dtype), batch.y.to(dtype), batch.t.to(dtype),
                  batch.size(), torch::TensorOptions().dtype(dtype)};
  ctx.wrong.wrong_t = ctx.wrong.wrong_t.to(dtype);
  ctx.wrong.wrong_y = ctx.wrong.wrong_y.to(dtype);
  return ctx;
}

LossBreakdown finish_step(TrainState& state, const LossTerms& d_terms, const LossTerms& g_terms) {
  LossTerms merged = g_terms;
  merged.real_img = d_terms.real_img;
  merged.real_newtrans = d_terms.real_newtrans;
  merged.real_newimg = d_terms.real_newimg;
  merged.match_d = d_terms.match_d;
  const auto breakdown = full_objective(merged, state.config.weights());
  if (!breakdown.all_finite()) throw TrainingDivergence(state.step, breakdown);
  ++state.step;
  return breakdown;
}

void discriminator_update(TrainState& state, const torch::Tensor& loss_d) {
  const auto ge_params = state.nets.generator_encoder_parameters();
  const auto before = state.config.verify_param_isolation ? parameter_hash(ge_params) : 0;
  state.opt_d->zero_grad();
  loss_d.backward();
  state.opt_d->step();
  check_isolation(state, before, ge_params, "discriminator");
}

void generator_update(TrainState& state, const torch::Tensor& total_g) {
  const auto d_params = state.nets.discriminator_parameters();
  const auto before = state.config.verify_param_isolation ? parameter_hash(d_params) : 0;
  state.opt_ge->zero_grad();
  total_g.backward();
  state.opt_ge->step();
  check_isolation(state, before, d_params, "generator/encoder");
}

}  // namespace

void TrainConfig::validate() const {
  weights().validate();
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (d_steps_per_g_step < 1) throw ConfigError("d_steps_per_g_step must be >= 1");
  if (transition_dim < 1) throw ConfigError("transition_dim must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (eval_count < 0) throw ConfigError("eval_count must be >= 0");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"lambda", [&](const std::string& v) { c.lambda = parse_double("lambda", v); }},
      {"lambda1", [&](const std::string& v) { c.lambda1 = parse_double("lambda1", v); }},
      {"lambda2", [&](const std::string& v) { c.lambda2 = parse_double("lambda2", v); }},
      {"learning_rate", [&](const std::string& v) { c.learning_rate = parse_double("learning_rate", v); }},
      {"adam_beta1", [&](const std::string& v) { c.adam_beta1 = parse_double("adam_beta1", v); }},
      {"adam_beta2", [&](const std::string& v) { c.adam_beta2 = parse_double("adam_beta2", v); }},
      {"batch_size", [&](const std::string& v) { c.batch_size = parse_int<std::int64_t>("batch_size", v); }},
      {"epochs", [&](const std::string& v) { c.epochs = parse_int<std::int64_t>("epochs", v); }},
      {"d_steps_per_g_step",
       [&](const std::string& v) { c.d_steps_per_g_step = parse_int<std::int64_t>("d_steps_per_g_step", v); }},
      {"seed", [&](const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); }},
      {"transition_dim", [&](const std::string& v) { c.transition_dim = parse_int<std::int64_t>("transition_dim", v); }},
      {"dataset", [&](const std::string& v) { c.dataset = v; }},
      {"checkpoint_dir", [&](const std::string& v) { c.checkpoint_dir = v; }},
      {"log_dir", [&](const std::string& v) { c.log_dir = v; }},
      {"base_channels", [&](const std::string& v) { c.base_channels = parse_int<std::int64_t>("base_channels", v); }},
      {"generator_loss", [&](const std::string& v) { c.generator_loss = parse_generator_loss_form(v); }},
      {"encoder_learns_from_generated",
       [&](const std::string& v) { c.encoder_learns_from_generated = parse_bool("encoder_learns_from_generated", v); }},
      {"oracle", [&](const std::string& v) { c.oracle = v; }},
      {"eval_count", [&](const std::string& v) { c.eval_count = parse_int<std::int64_t>("eval_count", v); }},
      {"verify_param_isolation",
       [&](const std::string& v) { c.verify_param_isolation = parse_bool("verify_param_isolation", v); }},
  };
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(value);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lambda = " << format_double(lambda) << '\n'
     << "lambda1 = " << format_double(lambda1) << '\n'
     << "lambda2 = " << format_double(lambda2) << '\n'
     << "learning_rate = " << format_double(learning_rate) << '\n'
     << "adam_beta1 = " << format_double(adam_beta1) << '\n'
     << "adam_beta2 = " << format_double(adam_beta2) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "d_steps_per_g_step = " << d_steps_per_g_step << '\n'
     << "seed = " << seed << '\n'
     << "transition_dim = " << transition_dim << '\n'
     << "dataset = " << dataset << '\n'
     << "checkpoint_dir = " << checkpoint_dir << '\n'
     << "log_dir = " << log_dir << '\n'
     << "base_channels = " << base_channels << '\n'
     << "generator_loss = " << to_string(generator_loss) << '\n'
     << "encoder_learns_from_generated = " << (encoder_learns_from_generated ? "true" : "false") << '\n'
     << "oracle = " << oracle << '\n'
     << "eval_count = " << eval_count << '\n'
     << "verify_param_isolation = " << (verify_param_isolation ? "true" : "false") << '\n';
  return os.str();
}

const char* to_string(Phase phase) noexcept { return phase == Phase::a ? "a" : "b"; }

Phase phase_for_step(std::int64_t step) noexcept { return step % 2 == 0 ? Phase::a : Phase::b; }

TrainState TrainState::create(const TrainConfig& config, Canvas canvas, std::int64_t channels) {
  config.validate();
  TrainState s;
  s.config = config;
  NetworkConfig net;
  net.height = canvas.height;
  net.width = canvas.width;
  net.channels = channels;
  net.transition_dim = config.transition_dim;
  net.base_channels = config.base_channels;
  net.seed = config.seed;
  s.nets = Networks::create(net);
  const auto betas = std::make_tuple(config.adam_beta1, config.adam_beta2);
  s.opt_ge = std::make_unique<torch::optim::Adam>(s.nets.generator_encoder_parameters(),
                                                  torch::optim::AdamOptions(config.learning_rate).betas(betas));
  s.opt_d = std::make_unique<torch::optim::Adam>(s.nets.discriminator_parameters(),
                                                 torch::optim::AdamOptions(config.learning_rate).betas(betas));
  return s;
}

Translator TrainState::translator() {
  auto g = nets.generator;
  auto e = nets.encoder;
  return {[g](const torch::Tensor& x, const torch::Tensor& t) mutable { return g->forward(x, t); },
          [e](const torch::Tensor& x, const torch::Tensor& y) mutable { return e->forward(x, y); }};
}

TrainingDivergence::TrainingDivergence(std::int64_t step, LossBreakdown breakdown, const std::string& detail)
    : Error("training diverged at step " + std::to_string(step) + ": " +
            (detail.empty() ? "non-finite loss " + breakdown.to_json().dump() : detail)),
      step_(step),
      breakdown_(breakdown) {}

static LossBreakdown phase_a_impl(TrainState& state, const TripletBatch& batch) {
  auto ctx = begin_step(state, batch);
  auto& n = state.nets;
  const auto& cfg = state.config;
  const auto form = cfg.generator_loss;
  const auto d = n.config.transition_dim;

  // Draw order is fixed: posterior noise, then prior.
  auto posterior = n.encoder->forward(ctx.x, ctx.y);
  const auto eps = torch::randn({ctx.batch, d}, ctx.gen, ctx.options);
  const auto t_prior = torch::randn({ctx.batch, d}, ctx.gen, ctx.options);
  const auto t_tilde = sample_posterior(posterior, eps).values;
  const auto y_hat = n.generator->forward(ctx.x, ctx.t);

  LossTerms d_terms;
  for (std::int64_t k = 0; k < cfg.d_steps_per_g_step; ++k) {
    d_terms = {};
    d_terms.real_img = adv_real_img(n.disc_real->forward(ctx.y), n.disc_real->forward(y_hat.detach()));
    d_terms.real_newtrans = adv_trans(n.disc_trans->forward(ctx.t), n.disc_trans->forward(t_prior),
                                      n.disc_trans->forward(t_tilde.detach()));
    MatchScores scores;
    scores.true_triplet = n.disc_match->forward(ctx.x, ctx.t, ctx.y);
    scores.fake_gen = n.disc_match->forward(ctx.x, ctx.t, y_hat.detach());
    scores.wrong_t = n.disc_match->forward(ctx.x, ctx.wrong.wrong_t, ctx.y);
    scores.wrong_y = n.disc_match->forward(ctx.x, ctx.t, ctx.wrong.wrong_y);
    d_terms.match_d = adv_match(scores).match_d;
    discriminator_update(state, combine_objective(d_terms, cfg.weights()).total_d);
  }

  const auto d_params = n.discriminator_parameters();
  const auto g_terms = without_param_grads(d_params, [&] {
    LossTerms g;
    const auto zero = torch::zeros_like(ctx.t);
    g.recons_img_cyc = recons_img_cyc(ctx.x, n.generator->forward(y_hat, -ctx.t));
    g.recons_img_self = recons_img_self(ctx.x, n.generator->forward(ctx.x, zero));
    auto encode_generated = [&] { return n.encoder->forward(ctx.x, y_hat).mean; };
    const auto t_from_gen = cfg.encoder_learns_from_generated
                                ? encode_generated()
                                : without_param_grads(n.encoder->parameters(), encode_generated);
    g.recons_trans = recons_trans(ctx.t, posterior.mean, t_from_gen, n.encoder->forward(ctx.x, ctx.x).mean);
    g.adv_g = generator_adversarial(n.disc_real->forward(y_hat), form) +
              generator_adversarial(n.disc_trans->forward(t_tilde), form);
    const auto fake_gen = n.disc_match->forward(ctx.x, ctx.t, y_hat);
    g.match_g = generator_adversarial(fake_gen, GeneratorLossForm::saturating);
    g.match_g_surrogate = generator_adversarial(fake_gen, form);
    return g;
  });
  generator_update(state, combine_objective(g_terms, cfg.weights()).total_g);
  return finish_step(state, d_terms, g_terms);
}

static LossBreakdown phase_b_impl(TrainState& state, const TripletBatch& batch) {
  auto ctx = begin_step(state, batch);
  auto& n = state.nets;
  const auto& cfg = state.config;
  const auto form = cfg.generator_loss;
  const auto d = n.config.transition_dim;

  auto posterior = n.encoder->forward(ctx.x, ctx.y);
  const auto eps = torch::randn({ctx.batch, d}, ctx.gen, ctx.options);
  const auto t_prior = torch::randn({ctx.batch, d}, ctx.gen, ctx.options);
  const auto t_tilde = sample_posterior(posterior, eps).values;
  const auto y_tilde = n.generator->forward(ctx.x, t_tilde);
  const auto y_prime = n.generator->forward(ctx.x, t_prior);

  LossTerms d_terms;
  for (std::int64_t k = 0; k < cfg.d_steps_per_g_step; ++k) {
    d_terms = {};
    d_terms.real_newimg = adv_real_newimg(n.disc_real->forward(ctx.y), n.disc_real->forward(y_tilde.detach()),
                                          n.disc_real->forward(y_prime.detach()));
    MatchScores scores;
    scores.true_triplet = n.disc_match->forward(ctx.x, ctx.t, ctx.y);
    scores.fake_prior = n.disc_match->forward(ctx.x, t_prior, y_prime.detach());
    scores.fake_enc = n.disc_match->forward(ctx.x, t_tilde.detach(), y_tilde.detach());
    scores.wrong_t = n.disc_match->forward(ctx.x, ctx.wrong.wrong_t, ctx.y);
    scores.wrong_y = n.disc_match->forward(ctx.x, ctx.t, ctx.wrong.wrong_y);
    d_terms.match_d = adv_match(scores).match_d;
    discriminator_update(state, combine_objective(d_terms, cfg.weights()).total_d);
  }

  const auto d_params = n.discriminator_parameters();
  const auto g_terms = without_param_grads(d_params, [&] {
    LossTerms g;
    auto encode_generated = [&] {
      return std::make_pair(n.encoder->forward(ctx.x, y_prime).mean, n.encoder->forward(ctx.x, y_tilde).mean);
    };
    const auto [prior_rec, enc_rec] = cfg.encoder_learns_from_generated
                                          ? encode_generated()
                                          : without_param_grads(n.encoder->parameters(), encode_generated);
    g.recons_newtrans = recons_newtrans(t_prior, t_tilde.detach(), prior_rec, enc_rec);
    g.adv_g = generator_adversarial(n.disc_real->forward(y_tilde), form) +
              generator_adversarial(n.disc_real->forward(y_prime), form);
    const auto fake_prior = n.disc_match->forward(ctx.x, t_prior, y_prime);
    const auto fake_enc = n.disc_match->forward(ctx.x, t_tilde, y_tilde);
    g.match_g = generator_adversarial(fake_prior, GeneratorLossForm::saturating) +
                generator_adversarial(fake_enc, GeneratorLossForm::saturating);
    g.match_g_surrogate = generator_adversarial(fake_prior, form) + generator_adversarial(fake_enc, form);
    return g;
  });
  generator_update(state, combine_objective(g_terms, cfg.weights()).total_g);
  return finish_step(state, d_terms, g_terms);
}

// Non-finite activations surface as out-of-range discriminator scores or
// non-finite posteriors before a loss is formed; both count as divergence.
template <typename Impl>
LossBreakdown guarded(TrainState& state, const TripletBatch& batch, Impl impl) {
  try {
    return impl(state, batch);
  } catch (const DomainError& e) {
    throw TrainingDivergence(state.step, {}, e.what());
  } catch (const NumericError& e) {
    throw TrainingDivergence(state.step, {}, e.what());
  }
}

LossBreakdown train_step_phase_a(TrainState& state, const TripletBatch& batch) {
  return guarded(state, batch, phase_a_impl);
}

LossBreakdown train_step_phase_b(TrainState& state, const TripletBatch& batch) {
  return guarded(state, batch, phase_b_impl);
}

LossBreakdown train_step(TrainState& state, const TripletBatch& batch) {
  return phase_for_step(state.step) == Phase::a ? train_step_phase_a(state, batch) : train_step_phase_b(state, batch);
}

TripletBatch draw_training_batch(const DatasetSplit& split, const TrainConfig& config, std::int64_t step) {
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(derive_seed(config.seed, streams::kBatch, static_cast<std::uint64_t>(step) * 128 + attempt));
    auto batch = sample_batch(split, config.batch_size, rng);
    try {
      std::mt19937_64 probe(0);
      make_wrong_triplets(batch, probe);
      return batch;
    } catch (const DataError&) {
      continue;
    }
  }
  throw DataError("could not draw a batch that admits wrong triplets after 100 attempts");
}

std::int64_t steps_per_epoch(const DatasetSplit& split, const TrainConfig& config) {
  const auto n = static_cast<std::int64_t>(split.train.size());
  return (n + config.batch_size - 1) / config.batch_size;
}

void save_checkpoint(const fs::path& path, const TrainState& state) {
  torch::serialize::OutputArchive archive;
  write_string(archive, "format", "tegan-ckpt-v1");
  write_string(archive, "config", state.config.to_text());
  const auto& nc = state.nets.config;
  nlohmann::json net = {{"height", nc.height},
                        {"width", nc.width},
                        {"channels", nc.channels},
                        {"transition_dim", nc.transition_dim},
                        {"base_channels", nc.base_channels},
                        {"seed", nc.seed}};
  write_string(archive, "network", net.dump());
  write_u64(archive, "rng/seed", state.config.seed);
  write_u64(archive, "rng/step", static_cast<std::uint64_t>(state.step));
  write_u64(archive, "epoch", static_cast<std::uint64_t>(state.epoch));
  auto put = [&](const char* key, const torch::nn::Module& m) {
    torch::serialize::OutputArchive sub;
    m.save(sub);
    archive.write(key, sub);
  };
  put("generator", *state.nets.generator);
  put("encoder", *state.nets.encoder);
  put("disc_real", *state.nets.disc_real);
  put("disc_trans", *state.nets.disc_trans);
  put("disc_match", *state.nets.disc_match);
  torch::serialize::OutputArchive opt_ge, opt_d;
  state.opt_ge->save(opt_ge);
  state.opt_d->save(opt_d);
  archive.write("optim_ge", opt_ge);
  archive.write("optim_d", opt_d);

  const auto tmp = path.string() + ".tmp";
  archive.save_to(tmp);
  fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint '" + path.string() + "' does not exist");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error&) {
    throw FormatError("cannot read checkpoint '" + path.string() + "'");
  }
  require_format(archive, "tegan-ckpt-v1", path.string());
  const auto config = TrainConfig::parse(read_string(archive, "config"));
  const auto net = nlohmann::json::parse(read_string(archive, "network"));
  auto state = TrainState::create(config, Canvas{net.at("height"), net.at("width")}, net.at("channels"));
  if (state.nets.config.base_channels != net.at("base_channels").get<std::int64_t>() ||
      state.nets.config.transition_dim != net.at("transition_dim").get<std::int64_t>()) {
    throw FormatError("checkpoint network description disagrees with its config");
  }
  auto get = [&](const char* key, torch::nn::Module& m) {
    torch::serialize::InputArchive sub;
    archive.read(key, sub);
    m.load(sub);
  };
  get("generator", *state.nets.generator);
  get("encoder", *state.nets.encoder);
  get("disc_real", *state.nets.disc_real);
  get("disc_trans", *state.nets.disc_trans);
  get("disc_match", *state.nets.disc_match);
  torch::serialize::InputArchive opt_ge, opt_d;
  archive.read("optim_ge", opt_ge);
  archive.read("optim_d", opt_d);
  state.opt_ge->load(opt_ge);
  state.opt_d->load(opt_d);
  state.step = static_cast<std::int64_t>(read_u64(archive, "rng/step"));
  state.epoch = static_cast<std::int64_t>(read_u64(archive, "epoch"));
  return state;
}

FitResult fit(const TrainConfig& config, const DatasetSplit& split, std::optional<TrainState> resume,
              const FitOptions& options) {
  config.validate();
  if (static_cast<std::int64_t>(split.attribute_count()) != config.transition_dim) {
    throw ConfigError("transition_dim " + std::to_string(config.transition_dim) + " does not match the dataset's " +
                      std::to_string(split.attribute_count()) + " attributes");
  }
  split.check_holdout();
  FitResult result{resume ? std::move(*resume) : TrainState::create(config, split.canvas)};
  auto& state = result.state;

  std::optional<OracleClassifier> oracle;
  if (!config.oracle.empty()) oracle = OracleClassifier::load(config.oracle);

  std::ofstream log;
  if (!config.log_dir.empty()) {
    fs::create_directories(config.log_dir);
    log.open(fs::path(config.log_dir) / "train_log.jsonl", state.step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot open training log in '" + config.log_dir + "'");
  }
  if (!config.checkpoint_dir.empty()) fs::create_directories(config.checkpoint_dir);

  const auto per_epoch = steps_per_epoch(split, config);
  std::int64_t completed = 0;
  while (state.epoch < config.epochs) {
    if (options.stop_after_epochs >= 0 && completed >= options.stop_after_epochs) break;
    for (std::int64_t s = 0; s < per_epoch; ++s) {
      const auto batch = draw_training_batch(split, config, state.step);
      StepRecord rec{state.step, state.epoch, phase_for_step(state.step), {}};
      rec.losses = train_step(state, batch);
      if (log.is_open()) {
        auto j = rec.losses.to_json();
        j["type"] = "step";
        j["step"] = rec.step;
        j["epoch"] = rec.epoch;
        j["phase"] = to_string(rec.phase);
        log << j.dump() << '\n';
      }
      if (options.on_step) options.on_step(rec);
      result.history.push_back(std::move(rec));
    }
    ++state.epoch;
    ++completed;

    MetricsReport metrics;
    if (config.eval_count > 0 && !split.test.empty()) {
      metrics = evaluate(state.translator(), oracle ? &*oracle : nullptr, split.test, split.holdout,
                         EvalOptions{config.eval_count, 64, config.seed});
      result.epoch_metrics.push_back(metrics);
      if (options.on_epoch) options.on_epoch(state.epoch, metrics);
    }
    if (log.is_open()) {
      auto j = metrics.to_json();
      j["type"] = "epoch";
      j["epoch"] = state.epoch;
      j["step"] = state.step;
      log << j.dump() << '\n';
      log.flush();
    }
    if (!config.checkpoint_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << state.epoch << ".ckpt";
      const auto path = fs::path(config.checkpoint_dir) / name.str();
      save_checkpoint(path, state);
      fs::copy_file(path, fs::path(config.checkpoint_dir) / "latest.ckpt", fs::copy_options::overwrite_existing);
    }
  }
  return result;
}

}  // namespace tegan
