#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "tegan/data.hpp"
#include "tegan/errors.hpp"
#include "tegan/losses.hpp"
#include "tegan/metrics.hpp"
#include "tegan/networks.hpp"

namespace tegan {

// Flat key = value document; keys are the field names below.
struct TrainConfig {
  double lambda = 1.0;
  double lambda1 = 10.0;
  double lambda2 = 10.0;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::int64_t batch_size = 16;
  std::int64_t epochs = 20;
  std::int64_t d_steps_per_g_step = 1;
  std::uint64_t seed = 0;
  std::int64_t transition_dim = 5;
  std::string dataset;
  std::string checkpoint_dir;
  std::string log_dir;

  std::int64_t base_channels = 16;
  GeneratorLossForm generator_loss = GeneratorLossForm::non_saturating;
  // When false, E(x, G(...)) terms train G only and E learns from real pairs.
  bool encoder_learns_from_generated = false;
  std::string oracle;
  std::int64_t eval_count = 256;
  // Hash parameter groups around every update and fail if an update leaks
  // into the other group.
  bool verify_param_isolation = false;

  LossWeights weights() const { return {lambda, lambda1, lambda2}; }
  void validate() const;

  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

enum class Phase { a, b };
const char* to_string(Phase phase) noexcept;
// Strict alternation: even steps run phase a, odd steps phase b.
Phase phase_for_step(std::int64_t step) noexcept;

struct TrainState {
  TrainConfig config;
  Networks nets;
  std::unique_ptr<torch::optim::Adam> opt_ge;
  std::unique_ptr<torch::optim::Adam> opt_d;
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  static TrainState create(const TrainConfig& config, Canvas canvas, std::int64_t channels = 3);
  Translator translator();
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(std::int64_t step, LossBreakdown breakdown, const std::string& detail = {});
  std::int64_t step() const noexcept { return step_; }
  const LossBreakdown& breakdown() const noexcept { return breakdown_; }

 private:
  std::int64_t step_;
  LossBreakdown breakdown_;
};

// Encoding and generation: D update on real/fake images, transitions and
// triplets, then a G/E update on adversarial surrogates, image cycle/self
// reconstruction and transition reconstruction. Advances state.step.
LossBreakdown train_step_phase_a(TrainState& state, const TripletBatch& batch);

// Generation from sampled transitions (posterior and prior), sharing D_Match
// with phase a.
LossBreakdown train_step_phase_b(TrainState& state, const TripletBatch& batch);

LossBreakdown train_step(TrainState& state, const TripletBatch& batch);

// Batch for a given step, deterministic in (seed, step); retried until wrong
// triplets can be formed.
TripletBatch draw_training_batch(const DatasetSplit& split, const TrainConfig& config, std::int64_t step);

std::int64_t steps_per_epoch(const DatasetSplit& split, const TrainConfig& config);

struct StepRecord {
  std::int64_t step;
  std::int64_t epoch;
  Phase phase;
  LossBreakdown losses;
};

struct FitResult {
  TrainState state;
  std::vector<StepRecord> history;
  std::vector<MetricsReport> epoch_metrics;
};

struct FitOptions {
  // Stop after this many completed epochs of the current run (simulated interruption); -1 for none.
  std::int64_t stop_after_epochs = -1;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::int64_t epoch, const MetricsReport&)> on_epoch;
};

// Runs epochs [state.epoch, config.epochs). Writes checkpoints and JSON-lines
// logs when the corresponding directories are configured.
FitResult fit(const TrainConfig& config, const DatasetSplit& split, std::optional<TrainState> resume = std::nullopt,
              const FitOptions& options = {});

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace tegan
