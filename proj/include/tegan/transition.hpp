#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <torch/torch.h>

namespace tegan {

// Binary attribute annotation; every entry is exactly -1 or +1.
class AttributeVector {
 public:
  AttributeVector() = default;
  explicit AttributeVector(std::vector<int> bits);
  AttributeVector(std::initializer_list<int> bits) : AttributeVector(std::vector<int>(bits)) {}

  std::size_t size() const noexcept { return bits_.size(); }
  int operator[](std::size_t i) const { return bits_.at(i); }
  const std::vector<int>& bits() const noexcept { return bits_; }

  AttributeVector flipped(std::size_t index) const;
  // Float tensor of shape [K].
  torch::Tensor to_tensor() const;

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;

 private:
  std::vector<int> bits_;
};

enum class TransitionKind { attribute_diff, domain_index, latent_sample };

const char* to_string(TransitionKind kind) noexcept;

// The explicit data-mapping parameter t. `values` has shape [d] for a single
// transition or [B, d] for a batch; every operation below is elementwise and
// accepts either.
struct Transition {
  torch::Tensor values;
  TransitionKind kind = TransitionKind::latent_sample;

  std::int64_t dim() const { return values.size(-1); }
  std::vector<double> to_vector() const;
};

// Diagonal Gaussian q(t | x, y). Shapes [d] or [B, d].
struct TransitionPosterior {
  torch::Tensor mean;
  torch::Tensor log_var;

  // Throws DimensionError on shape mismatch, NumericError on non-finite entries.
  void validate() const;
};

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 4.0;

// a_y - a_x, entries in {-2, 0, +2}.
Transition transition_from_attributes(const AttributeVector& a_x, const AttributeVector& a_y);

Transition negate(const Transition& t);
Transition zero_transition(std::int64_t d);
Transition scale(const Transition& t, double alpha);
Transition add(const Transition& a, const Transition& b);

// Fixed /2 normalization that maps raw attribute differences onto {-1, 0, +1}.
Transition normalize_attribute_difference(const Transition& t);

Transition sample_prior(std::int64_t d, torch::Generator& gen);
Transition sample_prior(std::int64_t batch, std::int64_t d, torch::Generator& gen);

// Reparameterized draw mean + exp(clamp(log_var) / 2) * eps; differentiable in
// both posterior tensors.
Transition sample_posterior(const TransitionPosterior& p, torch::Generator& gen);
Transition sample_posterior(const TransitionPosterior& p, const torch::Tensor& eps);

Transition domain_index_transition(std::int64_t k, std::int64_t n);

}  // namespace tegan
