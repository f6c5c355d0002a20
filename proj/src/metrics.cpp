#include "tegan/metrics.hpp"

#include <array>
#include <cmath>
#include <iostream>
#include <limits>

#include "tegan/archive.hpp"
#include "tegan/errors.hpp"
#include "tegan/rng.hpp"

namespace tegan {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_image_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.dim() != 3 || a.sizes() != b.sizes()) {
    throw DimensionError(std::string(what) + ": expected two [C, H, W] images of equal shape");
  }
}

// [C, H, W] in [-1, 1] -> row-major [H * W] luma in [0, 1].
std::vector<double> luma01(const torch::Tensor& img) {
  auto x = ((img.detach().to(torch::kFloat64) + 1.0) * 0.5).contiguous();
  const auto h = x.size(1), w = x.size(2);
  std::vector<double> out(static_cast<std::size_t>(h * w));
  auto acc = x.accessor<double, 3>();
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      out[static_cast<std::size_t>(i * w + j)] =
          x.size(0) == 3 ? 0.299 * acc[0][i][j] + 0.587 * acc[1][i][j] + 0.114 * acc[2][i][j] : acc[0][i][j];
    }
  }
  return out;
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> g{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable valid-mode Gaussian filter of an h x w field.
std::vector<double> filter_valid(const std::vector<double>& f, std::int64_t h, std::int64_t w) {
  static const auto g = gaussian_taps();
  const auto ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[static_cast<std::size_t>(k)] * f[static_cast<std::size_t>(i * w + j + k)];
      rows[static_cast<std::size_t>(i * ow + j)] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t i = 0; i < oh; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>((i + k) * ow + j)];
      out[static_cast<std::size_t>(i * ow + j)] = s;
    }
  }
  return out;
}

torch::Tensor covariance(const torch::Tensor& feats, torch::Tensor& mean) {
  mean = feats.mean(0);
  auto centered = feats - mean;
  return centered.t().matmul(centered) / static_cast<double>(feats.size(0) - 1);
}

torch::Tensor symmetric_sqrt(const torch::Tensor& m) {
  auto [evals, evecs] = torch::linalg_eigh(0.5 * (m + m.t()));
  return evecs.matmul(torch::diag(evals.clamp_min(0.0).sqrt())).matmul(evecs.t());
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_image_shape(a, b, "ssim");
  const auto h = a.size(1), w = a.size(2);
  if (h < kSsimWindow || w < kSsimWindow) throw DimensionError("ssim needs images of at least 11x11");
  const auto la = luma01(a), lb = luma01(b);
  std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }
  const auto mu_a = filter_valid(la, h, w), mu_b = filter_valid(lb, h, w);
  const auto e_aa = filter_valid(aa, h, w), e_bb = filter_valid(bb, h, w), e_ab = filter_valid(ab, h, w);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_image_shape(a, b, "psnr");
  const auto diff = (a.detach().to(torch::kFloat64) - b.detach().to(torch::kFloat64)) * 0.5;
  const double mse = diff.pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
  if (feats_a.dim() != 2 || feats_b.dim() != 2 || feats_a.size(1) != feats_b.size(1)) {
    throw DimensionError("frechet_distance expects [N, F] and [M, F] feature sets");
  }
  if (feats_a.size(0) < 2 || feats_b.size(0) < 2) {
    throw InsufficientSamplesError("frechet_distance needs at least two samples per set");
  }
  if (feats_a.size(0) <= feats_a.size(1) || feats_b.size(0) <= feats_b.size(1)) {
    std::cerr << "warning: frechet_distance with no more samples than feature dimensions; covariance is singular\n";
  }
  const auto a = feats_a.detach().to(torch::kFloat64);
  const auto b = feats_b.detach().to(torch::kFloat64);
  torch::Tensor mu_a, mu_b;
  const auto cov_a = covariance(a, mu_a);
  const auto cov_b = covariance(b, mu_b);
  const auto root_a = symmetric_sqrt(cov_a);
  auto inner = root_a.matmul(cov_b).matmul(root_a);
  auto evals = torch::linalg_eigvalsh(0.5 * (inner + inner.t()));
  const double trace_sqrt = evals.clamp_min(0.0).sqrt().sum().item<double>();
  const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
  const double d2 = mean_term + cov_a.trace().item<double>() + cov_b.trace().item<double>() - 2.0 * trace_sqrt;
  return std::max(0.0, d2);
}

OracleNetImpl::OracleNetImpl(std::int64_t height, std::int64_t width, std::int64_t attributes,
                             std::int64_t feature_dim) {
  namespace nn = torch::nn;
  auto conv = [](std::int64_t in, std::int64_t out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
  };
  auto act = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  body_ = register_module("body", nn::Sequential(conv(3, 16), act(), conv(16, 32), act(), conv(32, 64), act()));
  feature_ = register_module("feature", nn::Linear(64 * (height / 8) * (width / 8), feature_dim));
  heads_ = register_module("heads", nn::Linear(feature_dim, attributes));
}

torch::Tensor OracleNetImpl::features(const torch::Tensor& images) {
  return torch::relu(feature_(body_->forward(images).flatten(1)));
}

torch::Tensor OracleNetImpl::logits_from_features(const torch::Tensor& f) { return heads_(f); }

OracleClassifier::OracleClassifier(std::vector<std::string> attribute_names, Canvas canvas, std::int64_t feature_dim,
                                   std::uint64_t seed)
    : names_(std::move(attribute_names)), canvas_(canvas), feature_dim_(feature_dim), seed_(seed) {
  if (names_.empty()) throw ConfigError("oracle needs at least one attribute");
  if (canvas.height % 8 || canvas.width % 8) throw ConfigError("oracle canvas must be a multiple of 8");
  net_ = OracleNet(canvas.height, canvas.width, static_cast<std::int64_t>(names_.size()), feature_dim);
  {
    torch::NoGradGuard no_grad;
    auto gen = make_generator(derive_seed(seed, streams::kOracle, 1));
    for (auto& p : net_->parameters()) {
      if (p.dim() >= 2) {
        const double fan_in = static_cast<double>(p.numel() / p.size(0));
        p.copy_(torch::randn(p.sizes(), gen) * std::sqrt(2.0 / fan_in));
      } else {
        p.zero_();
      }
    }
  }
}

void OracleClassifier::freeze() {
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  frozen_ = true;
}

torch::Tensor OracleClassifier::features(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != canvas_.height || images.size(3) != canvas_.width) {
    throw DimensionError("oracle expects [N, 3, " + std::to_string(canvas_.height) + ", " +
                         std::to_string(canvas_.width) + "] images");
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < images.size(0); i += 256) {
    parts.push_back(net_.ptr()->features(images.slice(0, i, std::min(images.size(0), i + 256)).to(torch::kFloat32)));
  }
  return torch::cat(parts);
}

torch::Tensor OracleClassifier::logits(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  return net_.ptr()->logits_from_features(features(images));
}

std::vector<AttributeVector> OracleClassifier::predict(const torch::Tensor& images) const {
  const auto l = logits(images).contiguous();
  std::vector<AttributeVector> out;
  for (std::int64_t i = 0; i < l.size(0); ++i) {
    std::vector<int> bits;
    for (std::int64_t k = 0; k < l.size(1); ++k) bits.push_back(l[i][k].item<float>() > 0 ? 1 : -1);
    out.emplace_back(std::move(bits));
  }
  return out;
}

void OracleClassifier::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive archive;
  write_string(archive, "format", "tegan-oracle-v1");
  nlohmann::json meta = {{"attribute_names", names_},
                         {"canvas", {canvas_.height, canvas_.width}},
                         {"feature_dim", feature_dim_},
                         {"seed", seed_},
                         {"frozen", frozen_}};
  write_string(archive, "meta", meta.dump());
  torch::serialize::OutputArchive net_archive;
  net_->save(net_archive);
  archive.write("net", net_archive);
  archive.save_to(path.string());
}

OracleClassifier OracleClassifier::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("oracle file '" + path.string() + "' does not exist");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("cannot read oracle '" + path.string() + "'");
  }
  require_format(archive, "tegan-oracle-v1", path.string());
  const auto meta = nlohmann::json::parse(read_string(archive, "meta"));
  OracleClassifier oracle(meta.at("attribute_names").get<std::vector<std::string>>(),
                          Canvas{meta.at("canvas").at(0), meta.at("canvas").at(1)}, meta.at("feature_dim"),
                          meta.at("seed"));
  torch::serialize::InputArchive net_archive;
  archive.read("net", net_archive);
  oracle.net_->load(net_archive);
  if (meta.value("frozen", false)) oracle.freeze();
  return oracle;
}

nlohmann::json OracleReport::to_json() const {
  return {{"per_attribute_accuracy", per_attribute_accuracy}, {"min_accuracy", min_accuracy}};
}

namespace {

struct RenderedSet {
  torch::Tensor images;
  torch::Tensor targets;  // [N, K] in {0, 1}
  std::vector<AttributeVector> attrs;
};

RenderedSet render_random_set(std::int64_t count, std::uint64_t seed, Canvas canvas) {
  RenderedSet set;
  std::vector<torch::Tensor> imgs;
  for (std::int64_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, streams::kOracle, static_cast<std::uint64_t>(i)));
    std::vector<int> bits(kShapeAttributeCount);
    for (auto& b : bits) b = (rng() >> 63) ? 1 : -1;
    AttributeVector a(bits);
    imgs.push_back(render({a, rng()}, canvas));
    set.attrs.push_back(a);
  }
  set.images = torch::stack(imgs);
  std::vector<torch::Tensor> rows;
  for (const auto& a : set.attrs) rows.push_back((a.to_tensor() + 1.0) * 0.5);
  set.targets = torch::stack(rows);
  return set;
}

}  // namespace

OracleReport validate_oracle(const OracleClassifier& oracle, std::int64_t count, std::uint64_t seed) {
  const auto set = render_random_set(count, seed, oracle.canvas());
  const auto pred = (oracle.logits(set.images) > 0).to(torch::kFloat32);
  const auto acc = (pred == set.targets).to(torch::kFloat64).mean(0);
  OracleReport report;
  for (std::int64_t k = 0; k < acc.size(0); ++k) report.per_attribute_accuracy.push_back(acc[k].item<double>());
  report.min_accuracy = acc.min().item<double>();
  return report;
}

std::pair<OracleClassifier, OracleReport> train_oracle(const OracleConfig& config) {
  if (config.train_count < 1 || config.val_count < 1 || config.epochs < 0 || config.batch_size < 1) {
    throw ConfigError("oracle counts, epochs and batch size must be positive");
  }
  OracleClassifier oracle(shape_attribute_names(), config.canvas, config.feature_dim, config.seed);
  const auto train = render_random_set(config.train_count, derive_seed(config.seed, streams::kOracle, 0xA), config.canvas);
  auto& net = oracle.net();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 rng(derive_seed(config.seed, streams::kOracle, 0xB));
  const auto n = config.train_count;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)], order[uniform_index(rng, static_cast<std::uint64_t>(i + 1))]);
    }
    const auto perm = torch::tensor(order, torch::kLong);
    for (std::int64_t s = 0; s < n; s += config.batch_size) {
      const auto idx = perm.slice(0, s, std::min(n, s + config.batch_size));
      auto loss = torch::binary_cross_entropy_with_logits(net->forward(train.images.index_select(0, idx)),
                                                          train.targets.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  oracle.freeze();
  auto report = validate_oracle(oracle, config.val_count, derive_seed(config.seed, streams::kOracle, 0xC));
  return {std::move(oracle), std::move(report)};
}

double attribute_accuracy(const OracleClassifier& oracle, const torch::Tensor& generated,
                          const std::vector<AttributeVector>& target_attrs) {
  if (!oracle.frozen()) throw StateError("attribute_accuracy requires a frozen oracle");
  if (!generated.defined() || generated.dim() != 4 || generated.size(0) == 0 || target_attrs.empty()) {
    throw DataError("attribute_accuracy needs a non-empty batch");
  }
  if (static_cast<std::size_t>(generated.size(0)) != target_attrs.size()) {
    throw DimensionError("attribute_accuracy: image and target counts differ");
  }
  const auto logits = oracle.logits(generated);
  std::vector<torch::Tensor> rows;
  for (const auto& a : target_attrs) {
    if (static_cast<std::int64_t>(a.size()) != logits.size(1)) throw DimensionError("target attribute length mismatch");
    rows.push_back(a.to_tensor());
  }
  const auto target = torch::stack(rows);
  const auto predicted = torch::where(logits > 0, 1.0f, -1.0f);
  return (predicted == target).to(torch::kFloat64).mean().item<double>();
}

double transition_error(const Translator& model, const TripletBatch& batch) {
  torch::NoGradGuard no_grad;
  const auto t = batch.t.to(torch::kFloat32);
  const auto generated = model.generate(batch.x, t);
  const auto from_gen = model.encode(batch.x, generated).mean;
  const auto from_pair = model.encode(batch.x, batch.y).mean;
  if (from_gen.sizes() != t.sizes() || from_pair.sizes() != t.sizes()) {
    throw DimensionError("transition_error: encoder output does not match transition shape");
  }
  return ((from_gen - t).abs().mean() + (from_pair - t).abs().mean()).item<double>();
}

nlohmann::json MetricsReport::to_json() const {
  return {{"ssim_self", number_or_null(ssim_self)},
          {"ssim_translate", number_or_null(ssim_translate)},
          {"psnr_self", number_or_null(psnr_self)},
          {"psnr_translate", number_or_null(psnr_translate)},
          {"frechet_distance", number_or_null(frechet_distance)},
          {"attr_acc_seen", number_or_null(attr_acc_seen)},
          {"attr_acc_unseen", number_or_null(attr_acc_unseen)},
          {"trans_recons_error", number_or_null(trans_recons_error)},
          {"counts", {{"evaluated", n_evaluated}, {"seen", n_seen}, {"unseen", n_unseen}}},
          {"consistency",
           {{"ssim_cycle", number_or_null(ssim_cycle)},
            {"frechet_posterior", number_or_null(frechet_posterior)},
            {"self_encoding_l1", number_or_null(self_encoding_l1)}}}};
}

MetricsReport evaluate(const Translator& model, const OracleClassifier* oracle,
                       const std::vector<TripletSample>& test, const HoldoutSpec& holdout, const EvalOptions& options) {
  if (test.empty()) throw DataError("evaluation set is empty");
  if (options.batch_size < 1) throw ConfigError("evaluation batch size must be >= 1");
  const auto n = options.count < 0 ? static_cast<std::int64_t>(test.size())
                                   : std::min<std::int64_t>(options.count, static_cast<std::int64_t>(test.size()));
  if (n < 1) throw DataError("evaluation count must be >= 1");
  torch::NoGradGuard no_grad;
  auto gen = make_generator(derive_seed(options.seed, streams::kEval));

  MetricsReport r;
  r.n_evaluated = n;
  double trans_err_sum = 0, self_enc_sum = 0;
  std::vector<torch::Tensor> real_y, translated, sampled, seen_imgs, unseen_imgs;
  std::vector<AttributeVector> seen_attrs, unseen_attrs;
  for (std::int64_t start = 0; start < n; start += options.batch_size) {
    std::vector<std::size_t> idx;
    for (auto i = start; i < std::min(n, start + options.batch_size); ++i) idx.push_back(static_cast<std::size_t>(i));
    const auto batch = gather_triplets(test, idx);
    const auto b = batch.size();
    const auto t = batch.t.to(torch::kFloat32);
    const auto self = model.generate(batch.x, torch::zeros_like(t));
    const auto trans = model.generate(batch.x, t);
    const auto cycled = model.generate(trans, -t);
    const auto posterior = model.encode(batch.x, batch.y);
    const auto t_tilde = sample_posterior(posterior, gen).values;
    const auto sampled_imgs = model.generate(batch.x, t_tilde);
    self_enc_sum += model.encode(batch.x, batch.x).mean.abs().mean().item<double>() * static_cast<double>(b);
    trans_err_sum += transition_error(model, batch) * static_cast<double>(b);
    for (std::int64_t i = 0; i < b; ++i) {
      r.ssim_self += ssim(batch.x[i], self[i]);
      r.psnr_self += psnr(batch.x[i], self[i]);
      r.ssim_translate += ssim(batch.x[i], trans[i]);
      r.psnr_translate += psnr(batch.x[i], trans[i]);
      r.ssim_cycle += ssim(batch.x[i], cycled[i]);
      const bool unseen = holdout.excludes(signature_of(batch.a_x[static_cast<std::size_t>(i)], batch.a_y[static_cast<std::size_t>(i)]));
      (unseen ? unseen_imgs : seen_imgs).push_back(trans[i]);
      (unseen ? unseen_attrs : seen_attrs).push_back(batch.a_y[static_cast<std::size_t>(i)]);
    }
    real_y.push_back(batch.y);
    translated.push_back(trans);
    sampled.push_back(sampled_imgs);
  }
  const double dn = static_cast<double>(n);
  r.ssim_self /= dn;
  r.psnr_self /= dn;
  r.ssim_translate /= dn;
  r.psnr_translate /= dn;
  r.ssim_cycle /= dn;
  r.trans_recons_error = trans_err_sum / dn;
  r.self_encoding_l1 = self_enc_sum / dn;
  r.n_seen = static_cast<std::int64_t>(seen_imgs.size());
  r.n_unseen = static_cast<std::int64_t>(unseen_imgs.size());

  r.frechet_distance = r.frechet_posterior = r.attr_acc_seen = r.attr_acc_unseen = nan();
  if (oracle != nullptr) {
    const auto real_feats = oracle->features(torch::cat(real_y));
    if (n >= 2) {
      r.frechet_distance = frechet_distance(real_feats, oracle->features(torch::cat(translated)));
      r.frechet_posterior = frechet_distance(real_feats, oracle->features(torch::cat(sampled)));
    }
    if (!seen_imgs.empty()) r.attr_acc_seen = attribute_accuracy(*oracle, torch::stack(seen_imgs), seen_attrs);
    if (!unseen_imgs.empty()) r.attr_acc_unseen = attribute_accuracy(*oracle, torch::stack(unseen_imgs), unseen_attrs);
  }
  return r;
}

}  // namespace tegan
