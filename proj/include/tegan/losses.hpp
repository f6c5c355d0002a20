#pragma once

#include <string>

#include "json.hpp"
#include <torch/torch.h>

namespace tegan {

// Adversarial values are in maximin form: expectations of log-probabilities,
// maximized by the discriminators. Reconstruction terms are mean absolute
// errors. Every function is differentiable and works in the dtype of its
// inputs; probabilities outside (0, 1) raise DomainError.

torch::Tensor adv_real_img(const torch::Tensor& d_real, const torch::Tensor& d_fake);
torch::Tensor recons_img_cyc(const torch::Tensor& x, const torch::Tensor& x_cycled);
torch::Tensor recons_img_self(const torch::Tensor& x, const torch::Tensor& x_self);
torch::Tensor adv_trans(const torch::Tensor& d_true, const torch::Tensor& d_prior, const torch::Tensor& d_enc);
torch::Tensor recons_trans(const torch::Tensor& t_true, const torch::Tensor& t_from_pair,
                           const torch::Tensor& t_from_gen, const torch::Tensor& t_self);
torch::Tensor adv_real_newimg(const torch::Tensor& d_real, const torch::Tensor& d_fake_enc,
                              const torch::Tensor& d_fake_prior);
torch::Tensor recons_newtrans(const torch::Tensor& t_prior, const torch::Tensor& t_enc,
                              const torch::Tensor& t_prior_rec, const torch::Tensor& t_enc_rec);

// Triplet discriminator scores per family. An undefined tensor means the
// family does not take part (used to restrict the loss to one training phase).
struct MatchScores {
  torch::Tensor true_triplet;
  torch::Tensor fake_gen;    // (x, t, G(x, t))
  torch::Tensor fake_prior;  // (x, t', G(x, t'))
  torch::Tensor fake_enc;    // (x, t~, G(x, t~))
  torch::Tensor wrong_t;     // (x, t_x, y)
  torch::Tensor wrong_y;     // (x, t, y_x)
};

struct MatchValues {
  torch::Tensor match_d;  // true + fakes + wrong triplets, maximized by D_Match
  torch::Tensor match_g;  // generated families only, minimized by G/E
};

MatchValues adv_match(const MatchScores& scores);

enum class GeneratorLossForm { non_saturating, saturating };

GeneratorLossForm parse_generator_loss_form(const std::string& text);
const char* to_string(GeneratorLossForm form) noexcept;

// Generator-facing term for one family of fake scores:
// non_saturating -> -E[log D(fake)], saturating -> E[log(1 - D(fake))].
torch::Tensor generator_adversarial(const torch::Tensor& d_fake, GeneratorLossForm form);

struct LossWeights {
  double lambda = 1.0;
  double lambda1 = 10.0;
  double lambda2 = 10.0;

  // ConfigError on negative weights.
  void validate() const;
};

// Scalar tensors for one batch. Missing terms are zero.
struct LossTerms {
  torch::Tensor real_img;
  torch::Tensor recons_img_cyc;
  torch::Tensor recons_img_self;
  torch::Tensor real_newtrans;
  torch::Tensor recons_trans;
  torch::Tensor real_newimg;
  torch::Tensor recons_newtrans;
  torch::Tensor match_d;
  torch::Tensor match_g;
  // Generator/encoder-facing surrogates for real_img + real_newimg + real_newtrans.
  torch::Tensor adv_g;
  // Generator-facing surrogate for match_g (equals match_g in the saturating form).
  torch::Tensor match_g_surrogate;
};

struct ObjectiveTotals {
  torch::Tensor total_g;
  torch::Tensor total_d;
};

// total_g = adv_g + lambda * match_g_surrogate + lambda1 * (cyc + self) + lambda2 * (trans + newtrans)
// total_d = -(real_img + real_newtrans + real_newimg) - lambda * match_d
ObjectiveTotals combine_objective(const LossTerms& terms, const LossWeights& weights);

struct LossBreakdown {
  double real_img = 0, recons_img_cyc = 0, recons_img_self = 0, real_newtrans = 0, recons_trans = 0,
         real_newimg = 0, recons_newtrans = 0, match_d = 0, match_g = 0;
  double adv_g = 0, match_g_surrogate = 0;
  double total_g = 0, total_d = 0;
  double lambda = 0, lambda1 = 0, lambda2 = 0;

  bool all_finite() const;
  nlohmann::json to_json() const;
  static LossBreakdown from_json(const nlohmann::json& j);
};

LossBreakdown full_objective(const LossTerms& terms, const LossWeights& weights);

}  // namespace tegan
