#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "tegan/transition.hpp"

namespace tegan {

// Shape contract shared by every network.
struct NetworkConfig {
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t channels = 3;
  std::int64_t transition_dim = 5;
  std::int64_t base_channels = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Clamp applied to every discriminator probability so that log D stays finite.
inline constexpr double kProbabilityEpsilon = 1e-7;

// Broadcast a [B, d] transition over an [H, W] grid -> [B, d, H, W].
torch::Tensor broadcast_transition(const torch::Tensor& t, std::int64_t height, std::int64_t width);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::InstanceNorm2d norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// G(x, t): downsample to an (H/4, W/4) bottleneck, concatenate the broadcast
// transition, two residual blocks, upsample back; tanh output.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t);

  const NetworkConfig& config() const noexcept { return config_; }

 private:
  NetworkConfig config_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential down_{nullptr};
  torch::nn::Sequential merge_{nullptr};
  torch::nn::Sequential residual_{nullptr};
  torch::nn::Sequential up_{nullptr};
  torch::nn::Sequential head_{nullptr};  // consumes [up path, stem] at full resolution
};
TORCH_MODULE(Generator);

// E(x, y) -> diagonal Gaussian posterior over t.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const NetworkConfig& config);
  TransitionPosterior forward(const torch::Tensor& x, const torch::Tensor& y);

 private:
  NetworkConfig config_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear hidden_{nullptr};
  torch::nn::Linear mean_head_{nullptr};
  torch::nn::Linear log_var_head_{nullptr};
};
TORCH_MODULE(Encoder);

// Patch-style convolutional critic. Patch logits are averaged before the
// sigmoid so the output is one probability per image.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  PatchDiscriminatorImpl(std::int64_t in_channels, std::int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& input);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

// D_Real(img) -> [B] probabilities.
class ImageDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ImageDiscriminatorImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& img);

 private:
  NetworkConfig config_;
  PatchDiscriminator net_{nullptr};
};
TORCH_MODULE(ImageDiscriminator);

// D_t(t) -> [B] probabilities; three fully connected layers.
class TransitionDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit TransitionDiscriminatorImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& t);

 private:
  NetworkConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(TransitionDiscriminator);

// D_Match(x, t, y) -> [B] probabilities over triplets.
class TripletDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit TripletDiscriminatorImpl(const NetworkConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& y);

 private:
  NetworkConfig config_;
  PatchDiscriminator net_{nullptr};
};
TORCH_MODULE(TripletDiscriminator);

// The five learnable functions of the model.
struct Networks {
  NetworkConfig config;
  Generator generator{nullptr};
  Encoder encoder{nullptr};
  ImageDiscriminator disc_real{nullptr};
  TransitionDiscriminator disc_trans{nullptr};
  TripletDiscriminator disc_match{nullptr};

  static Networks create(const NetworkConfig& config);

  std::vector<torch::Tensor> generator_encoder_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
  void train(bool on = true);
};

// Orthogonal kernels, zero biases, unit-scale norm affines; deterministic in seed.
void initialize_parameters(torch::nn::Module& module, std::uint64_t seed);

std::int64_t parameter_count(const torch::nn::Module& module);

// FNV-1a over the raw bytes of every parameter, in registration order.
std::uint64_t parameter_hash(const torch::nn::Module& module);
std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params);

// Convenience shape checks shared by networks, losses and metrics.
void require_image_batch(const torch::Tensor& x, const NetworkConfig& config, const char* what);
void require_transition_batch(const torch::Tensor& t, const NetworkConfig& config, const char* what);

}  // namespace tegan
