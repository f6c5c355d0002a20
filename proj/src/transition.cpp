#include "tegan/transition.hpp"

#include <string>

#include "tegan/errors.hpp"

namespace tegan {

AttributeVector::AttributeVector(std::vector<int> bits) : bits_(std::move(bits)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] != -1 && bits_[i] != 1) {
      throw DomainError("attribute entry " + std::to_string(i) + " is " + std::to_string(bits_[i]) +
                        "; expected -1 or +1");
    }
  }
}

AttributeVector AttributeVector::flipped(std::size_t index) const {
  if (index >= bits_.size()) {
    throw IndexError("attribute index " + std::to_string(index) + " out of range");
  }
  auto bits = bits_;
  bits[index] = -bits[index];
  return AttributeVector(std::move(bits));
}

torch::Tensor AttributeVector::to_tensor() const {
  auto out = torch::empty({static_cast<std::int64_t>(bits_.size())}, torch::kFloat32);
  auto acc = out.accessor<float, 1>();
  for (std::size_t i = 0; i < bits_.size(); ++i) acc[static_cast<std::int64_t>(i)] = static_cast<float>(bits_[i]);
  return out;
}

const char* to_string(TransitionKind kind) noexcept {
  switch (kind) {
    case TransitionKind::attribute_diff: return "attribute_diff";
    case TransitionKind::domain_index: return "domain_index";
    case TransitionKind::latent_sample: return "latent_sample";
  }
  return "unknown";
}

std::vector<double> Transition::to_vector() const {
  auto flat = values.detach().to(torch::kFloat64).contiguous().view(-1);
  return {flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel()};
}

void TransitionPosterior::validate() const {
  if (!mean.defined() || !log_var.defined()) throw DimensionError("posterior tensors are undefined");
  if (mean.sizes() != log_var.sizes()) {
    throw DimensionError("posterior mean and log_var shapes differ");
  }
  if (!torch::isfinite(mean).all().item<bool>() || !torch::isfinite(log_var).all().item<bool>()) {
    throw NumericError("posterior contains non-finite entries");
  }
}

Transition transition_from_attributes(const AttributeVector& a_x, const AttributeVector& a_y) {
  if (a_x.size() != a_y.size()) {
    throw DimensionError("attribute vectors differ in length: " + std::to_string(a_x.size()) + " vs " +
                         std::to_string(a_y.size()));
  }
  return {a_y.to_tensor() - a_x.to_tensor(), TransitionKind::attribute_diff};
}

Transition negate(const Transition& t) { return {-t.values, t.kind}; }

Transition zero_transition(std::int64_t d) {
  if (d < 1) throw DimensionError("transition dimension must be >= 1");
  return {torch::zeros({d}), TransitionKind::latent_sample};
}

Transition scale(const Transition& t, double alpha) { return {t.values * alpha, t.kind}; }

Transition add(const Transition& a, const Transition& b) {
  if (a.values.sizes() != b.values.sizes()) throw DimensionError("transition shapes differ");
  return {a.values + b.values, a.kind};
}

Transition normalize_attribute_difference(const Transition& t) { return {t.values * 0.5, t.kind}; }

Transition sample_prior(std::int64_t d, torch::Generator& gen) {
  if (d < 1) throw DimensionError("transition dimension must be >= 1");
  return {torch::randn({d}, gen), TransitionKind::latent_sample};
}

Transition sample_prior(std::int64_t batch, std::int64_t d, torch::Generator& gen) {
  if (d < 1 || batch < 1) throw DimensionError("prior batch and dimension must be >= 1");
  return {torch::randn({batch, d}, gen), TransitionKind::latent_sample};
}

Transition sample_posterior(const TransitionPosterior& p, const torch::Tensor& eps) {
  p.validate();
  if (eps.sizes() != p.mean.sizes()) throw DimensionError("noise shape does not match posterior");
  auto std_dev = torch::exp(0.5 * p.log_var.clamp(kLogVarMin, kLogVarMax));
  return {p.mean + std_dev * eps, TransitionKind::latent_sample};
}

Transition sample_posterior(const TransitionPosterior& p, torch::Generator& gen) {
  auto eps = torch::randn(p.mean.sizes(), gen, p.mean.options().requires_grad(false));
  return sample_posterior(p, eps);
}

Transition domain_index_transition(std::int64_t k, std::int64_t n) {
  if (n < 1) throw DimensionError("domain count must be >= 1");
  if (k < 0 || k >= n) {
    throw IndexError("domain index " + std::to_string(k) + " outside [0, " + std::to_string(n) + ")");
  }
  auto out = torch::zeros({n});
  out[k] = 1.0;
  return {out, TransitionKind::domain_index};
}

}  // namespace tegan
