#include "tegan/networks.hpp"

#include <cstring>
#include <string>

#include "tegan/errors.hpp"
#include "tegan/rng.hpp"

namespace nn = torch::nn;

namespace tegan {

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::InstanceNorm2d instance_norm(std::int64_t channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true));
}

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

torch::Tensor clamp_probability(const torch::Tensor& p) {
  return p.clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

std::string shape_string(const torch::Tensor& t) {
  std::string out = "[";
  for (std::int64_t i = 0; i < t.dim(); ++i) {
    if (i) out += ",";
    out += std::to_string(t.size(i));
  }
  return out + "]";
}

void orthogonal_(torch::Tensor& weight, torch::Generator& gen) {
  const auto rows = weight.size(0);
  const auto cols = weight.numel() / rows;
  auto flat = torch::randn({std::max(rows, cols), std::min(rows, cols)}, gen, torch::kFloat64);
  auto [q, r] = torch::linalg_qr(flat);
  q = q * torch::sign(torch::diagonal(r)).unsqueeze(0);
  if (rows < cols) q = q.t();
  weight.copy_(q.contiguous().view(weight.sizes()).to(weight.scalar_type()));
}

}  // namespace

void NetworkConfig::validate() const {
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("image size must be a positive multiple of 8, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (transition_dim < 1) throw ConfigError("transition_dim must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
}

void require_image_batch(const torch::Tensor& x, const NetworkConfig& config, const char* what) {
  if (!x.defined() || x.dim() != 4 || x.size(1) != config.channels || x.size(2) != config.height ||
      x.size(3) != config.width) {
    throw DimensionError(std::string(what) + ": expected image batch [B," + std::to_string(config.channels) + "," +
                         std::to_string(config.height) + "," + std::to_string(config.width) + "], got " +
                         (x.defined() ? shape_string(x) : std::string("undefined")));
  }
}

void require_transition_batch(const torch::Tensor& t, const NetworkConfig& config, const char* what) {
  if (!t.defined() || t.dim() != 2 || t.size(1) != config.transition_dim) {
    throw DimensionError(std::string(what) + ": expected transition batch [B," +
                         std::to_string(config.transition_dim) + "], got " +
                         (t.defined() ? shape_string(t) : std::string("undefined")));
  }
}

torch::Tensor broadcast_transition(const torch::Tensor& t, std::int64_t height, std::int64_t width) {
  return t.view({t.size(0), t.size(1), 1, 1}).expand({t.size(0), t.size(1), height, width});
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels)
    : conv1_(register_module("conv1", conv(channels, channels, 3, 1, 1))),
      conv2_(register_module("conv2", conv(channels, channels, 3, 1, 1))),
      norm1_(register_module("norm1", instance_norm(channels))),
      norm2_(register_module("norm2", instance_norm(channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(norm1_(conv1_(x)));
  return x + norm2_(conv2_(h));
}

GeneratorImpl::GeneratorImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const auto c = config.base_channels;
  stem_ = register_module("stem", nn::Sequential(conv(config.channels, c, 5, 1, 2), instance_norm(c), nn::ReLU()));
  down_ = register_module("down", nn::Sequential(conv(c, 2 * c, 4, 2, 1), instance_norm(2 * c), nn::ReLU(),
                                                 conv(2 * c, 4 * c, 4, 2, 1), instance_norm(4 * c), nn::ReLU()));
  merge_ = register_module(
      "merge", nn::Sequential(conv(4 * c + config.transition_dim, 4 * c, 3, 1, 1), instance_norm(4 * c), nn::ReLU()));
  residual_ = register_module("residual", nn::Sequential(ResidualBlock(4 * c), ResidualBlock(4 * c)));
  auto upsample = [] {
    return nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
  };
  up_ = register_module("up", nn::Sequential(upsample(), conv(4 * c, 2 * c, 3, 1, 1), instance_norm(2 * c), nn::ReLU(),
                                             upsample(), conv(2 * c, c, 3, 1, 1), instance_norm(c), nn::ReLU()));
  head_ = register_module("head", nn::Sequential(conv(2 * c, config.channels, 5, 1, 2), nn::Tanh()));
  initialize_parameters(*this, derive_seed(config.seed, streams::kInit, 1));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, const torch::Tensor& t) {
  require_image_batch(x, config_, "generator input");
  require_transition_batch(t, config_, "generator transition");
  if (t.size(0) != x.size(0)) throw DimensionError("generator: image and transition batch sizes differ");
  const auto skip = stem_->forward(x);
  auto h = down_->forward(skip);
  h = torch::cat({h, broadcast_transition(t.to(h.scalar_type()), h.size(2), h.size(3))}, 1);
  h = merge_->forward(h);
  h = residual_->forward(h);
  return head_->forward(torch::cat({up_->forward(h), skip}, 1));
}

EncoderImpl::EncoderImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const auto c = config.base_channels;
  features_ = register_module(
      "features", nn::Sequential(conv(2 * config.channels, c, 4, 2, 1), instance_norm(c), leaky(),
                                 conv(c, 2 * c, 4, 2, 1), instance_norm(2 * c), leaky(),
                                 conv(2 * c, 4 * c, 4, 2, 1), instance_norm(4 * c), leaky()));
  const auto flat = 4 * c * (config.height / 8) * (config.width / 8);
  hidden_ = register_module("hidden", nn::Linear(flat, 8 * c));
  mean_head_ = register_module("mean_head", nn::Linear(8 * c, config.transition_dim));
  log_var_head_ = register_module("log_var_head", nn::Linear(8 * c, config.transition_dim));
  initialize_parameters(*this, derive_seed(config.seed, streams::kInit, 2));
}

TransitionPosterior EncoderImpl::forward(const torch::Tensor& x, const torch::Tensor& y) {
  require_image_batch(x, config_, "encoder source");
  require_image_batch(y, config_, "encoder target");
  if (x.size(0) != y.size(0)) throw DimensionError("encoder: source and target batch sizes differ");
  auto h = features_->forward(torch::cat({x, y}, 1)).flatten(1);
  h = torch::leaky_relu(hidden_(h), 0.2);
  return {mean_head_(h), log_var_head_(h).clamp(kLogVarMin, kLogVarMax)};
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(std::int64_t in_channels, std::int64_t c) {
  body_ = register_module("body", nn::Sequential(conv(in_channels, c, 4, 2, 1), leaky(), conv(c, 2 * c, 4, 2, 1),
                                                 leaky(), conv(2 * c, 4 * c, 4, 2, 1), leaky(),
                                                 conv(4 * c, 1, 3, 1, 1)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& input) {
  auto logits = body_->forward(input).mean({1, 2, 3});
  return clamp_probability(torch::sigmoid(logits));
}

ImageDiscriminatorImpl::ImageDiscriminatorImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  net_ = register_module("net", PatchDiscriminator(config.channels, config.base_channels));
  initialize_parameters(*this, derive_seed(config.seed, streams::kInit, 3));
}

torch::Tensor ImageDiscriminatorImpl::forward(const torch::Tensor& img) {
  require_image_batch(img, config_, "image discriminator input");
  return net_->forward(img);
}

TransitionDiscriminatorImpl::TransitionDiscriminatorImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const auto hidden = 4 * config.base_channels;
  body_ = register_module("body", nn::Sequential(nn::Linear(config.transition_dim, hidden), leaky(),
                                                 nn::Linear(hidden, hidden), leaky(), nn::Linear(hidden, 1)));
  initialize_parameters(*this, derive_seed(config.seed, streams::kInit, 4));
}

torch::Tensor TransitionDiscriminatorImpl::forward(const torch::Tensor& t) {
  require_transition_batch(t, config_, "transition discriminator input");
  return clamp_probability(torch::sigmoid(body_->forward(t).squeeze(1)));
}

TripletDiscriminatorImpl::TripletDiscriminatorImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  net_ = register_module("net",
                         PatchDiscriminator(2 * config.channels + config.transition_dim, config.base_channels));
  initialize_parameters(*this, derive_seed(config.seed, streams::kInit, 5));
}

torch::Tensor TripletDiscriminatorImpl::forward(const torch::Tensor& x, const torch::Tensor& t,
                                                const torch::Tensor& y) {
  require_image_batch(x, config_, "triplet discriminator source");
  require_image_batch(y, config_, "triplet discriminator target");
  require_transition_batch(t, config_, "triplet discriminator transition");
  if (x.size(0) != y.size(0) || x.size(0) != t.size(0)) {
    throw DimensionError("triplet discriminator: batch sizes differ");
  }
  auto tmap = broadcast_transition(t.to(x.scalar_type()), config_.height, config_.width);
  return net_->forward(torch::cat({x, tmap, y}, 1));
}

Networks Networks::create(const NetworkConfig& config) {
  config.validate();
  Networks n;
  n.config = config;
  n.generator = Generator(config);
  n.encoder = Encoder(config);
  n.disc_real = ImageDiscriminator(config);
  n.disc_trans = TransitionDiscriminator(config);
  n.disc_match = TripletDiscriminator(config);
  return n;
}

std::vector<torch::Tensor> Networks::generator_encoder_parameters() const {
  auto params = generator->parameters();
  auto enc = encoder->parameters();
  params.insert(params.end(), enc.begin(), enc.end());
  return params;
}

std::vector<torch::Tensor> Networks::discriminator_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& group : {disc_real->parameters(), disc_trans->parameters(), disc_match->parameters()}) {
    params.insert(params.end(), group.begin(), group.end());
  }
  return params;
}

void Networks::train(bool on) {
  generator->train(on);
  encoder->train(on);
  disc_real->train(on);
  disc_trans->train(on);
  disc_match->train(on);
}

void initialize_parameters(nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = make_generator(seed);
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    auto& p = item.value();
    const auto& name = item.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      p.zero_();
    } else if (p.dim() >= 2) {
      orthogonal_(p, gen);
    } else {
      p.fill_(1.0);  // instance-norm scale
    }
  }
}

std::int64_t parameter_count(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::uint64_t parameter_hash(const nn::Module& module) { return parameter_hash(module.parameters()); }

}  // namespace tegan
