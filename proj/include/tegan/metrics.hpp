#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "tegan/data.hpp"
#include "tegan/transition.hpp"

namespace tegan {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Mean structural similarity of the ITU-R 601 luma of two [C, H, W] images in
// [-1, 1], rescaled to [0, 1]. 11x11 Gaussian window (sigma 1.5) over every
// fully contained window position.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

// Peak signal-to-noise ratio in dB over [0, 1]-rescaled images, capped at 100.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

// Squared Frechet distance between Gaussian fits of two [N, F] feature sets.
double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

// Small convolutional attribute classifier with a designated feature layer.
class OracleNetImpl : public torch::nn::Module {
 public:
  OracleNetImpl(std::int64_t height, std::int64_t width, std::int64_t attributes, std::int64_t feature_dim);

  torch::Tensor features(const torch::Tensor& images);
  torch::Tensor logits_from_features(const torch::Tensor& features);
  torch::Tensor forward(const torch::Tensor& images) { return logits_from_features(features(images)); }

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear feature_{nullptr};
  torch::nn::Linear heads_{nullptr};
};
TORCH_MODULE(OracleNet);

struct OracleConfig {
  std::int64_t train_count = 6000;
  std::int64_t val_count = 1000;
  std::int64_t epochs = 40;
  std::int64_t batch_size = 64;
  double learning_rate = 1e-3;
  std::int64_t feature_dim = 64;
  std::uint64_t seed = 0;
  Canvas canvas;
};

class OracleClassifier {
 public:
  OracleClassifier(std::vector<std::string> attribute_names, Canvas canvas, std::int64_t feature_dim,
                   std::uint64_t seed);

  bool frozen() const noexcept { return frozen_; }
  void freeze();

  const std::vector<std::string>& attribute_names() const noexcept { return names_; }
  Canvas canvas() const noexcept { return canvas_; }
  std::int64_t feature_dim() const noexcept { return feature_dim_; }
  OracleNet& net() noexcept { return net_; }

  // Evaluated in batches without gradient. [N, 3, H, W] -> [N, F] / [N, K].
  torch::Tensor features(const torch::Tensor& images) const;
  torch::Tensor logits(const torch::Tensor& images) const;
  // Sign of each head, as +-1 attribute vectors.
  std::vector<AttributeVector> predict(const torch::Tensor& images) const;

  void save(const std::filesystem::path& path) const;
  static OracleClassifier load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  Canvas canvas_;
  std::int64_t feature_dim_;
  std::uint64_t seed_;
  OracleNet net_{nullptr};
  bool frozen_ = false;
};

struct OracleReport {
  std::vector<double> per_attribute_accuracy;
  double min_accuracy = 0;
  nlohmann::json to_json() const;
};

// Trains on freshly rendered random shapes and validates on a disjoint
// rendered set; the returned classifier is frozen.
std::pair<OracleClassifier, OracleReport> train_oracle(const OracleConfig& config);

// Per-attribute validation accuracy on `count` newly rendered images.
OracleReport validate_oracle(const OracleClassifier& oracle, std::int64_t count, std::uint64_t seed);

// Fraction of (image, attribute) pairs whose oracle sign matches the target.
// StateError on an unfrozen oracle, DataError on an empty batch.
double attribute_accuracy(const OracleClassifier& oracle, const torch::Tensor& generated,
                          const std::vector<AttributeVector>& target_attrs);

// Function views of the trained networks, so evaluation also runs on mocks.
struct Translator {
  std::function<torch::Tensor(const torch::Tensor& x, const torch::Tensor& t)> generate;
  std::function<TransitionPosterior(const torch::Tensor& x, const torch::Tensor& y)> encode;
};

// mean|E(x, G(x, t)) - t| + mean|E(x, y) - t| using posterior means.
double transition_error(const Translator& model, const TripletBatch& batch);

struct MetricsReport {
  double ssim_self = 0, ssim_translate = 0, psnr_self = 0, psnr_translate = 0;
  double frechet_distance = 0, attr_acc_seen = 0, attr_acc_unseen = 0, trans_recons_error = 0;
  std::int64_t n_evaluated = 0, n_seen = 0, n_unseen = 0;
  // Post-training consistency diagnostics.
  double ssim_cycle = 0;         // ssim(x, G(G(x, t), -t))
  double frechet_posterior = 0;  // real y vs G(x, t~), t~ ~ q(t | x, y)
  double self_encoding_l1 = 0;   // mean |E(x, x)|

  // Non-finite values serialize as null.
  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::int64_t count = -1;  // first `count` test triplets; -1 for all
  std::int64_t batch_size = 64;
  std::uint64_t seed = 0;
};

// Oracle-dependent fields are NaN when `oracle` is null.
MetricsReport evaluate(const Translator& model, const OracleClassifier* oracle,
                       const std::vector<TripletSample>& test, const HoldoutSpec& holdout, const EvalOptions& options);

}  // namespace tegan
