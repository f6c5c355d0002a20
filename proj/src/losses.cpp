#include "tegan/losses.hpp"

#include <cmath>

#include "tegan/errors.hpp"

namespace tegan {

namespace {

void require_probabilities(const torch::Tensor& p, const char* what) {
  if (!p.defined() || p.numel() == 0) throw DimensionError(std::string(what) + ": empty score batch");
  const auto d = p.detach();
  if (!(d > 0).all().item<bool>() || !(d < 1).all().item<bool>()) {
    throw DomainError(std::string(what) + ": discriminator scores must lie in (0, 1)");
  }
}

torch::Tensor mean_log(const torch::Tensor& p, const char* what) {
  require_probabilities(p, what);
  return torch::log(p).mean();
}

torch::Tensor mean_log_complement(const torch::Tensor& p, const char* what) {
  require_probabilities(p, what);
  return torch::log1p(-p).mean();
}

torch::Tensor mean_abs_error(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    throw DimensionError(std::string(what) + ": input shapes differ");
  }
  if (a.numel() == 0) throw DimensionError(std::string(what) + ": empty input");
  return (a - b).abs().mean();
}

torch::Tensor or_zero(const torch::Tensor& t) {
  return t.defined() ? t : torch::zeros({}, torch::kFloat64);
}

double value_of(const torch::Tensor& t) { return t.defined() ? t.detach().item<double>() : 0.0; }

}  // namespace

torch::Tensor adv_real_img(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return mean_log(d_real, "adv_real_img real") + mean_log_complement(d_fake, "adv_real_img fake");
}

torch::Tensor recons_img_cyc(const torch::Tensor& x, const torch::Tensor& x_cycled) {
  return mean_abs_error(x_cycled, x, "recons_img_cyc");
}

torch::Tensor recons_img_self(const torch::Tensor& x, const torch::Tensor& x_self) {
  return mean_abs_error(x_self, x, "recons_img_self");
}

torch::Tensor adv_trans(const torch::Tensor& d_true, const torch::Tensor& d_prior, const torch::Tensor& d_enc) {
  return mean_log(d_true, "adv_trans true") + mean_log(d_prior, "adv_trans prior") +
         mean_log_complement(d_enc, "adv_trans encoded");
}

torch::Tensor recons_trans(const torch::Tensor& t_true, const torch::Tensor& t_from_pair,
                           const torch::Tensor& t_from_gen, const torch::Tensor& t_self) {
  if (!t_self.defined() || t_self.sizes() != t_true.sizes()) throw DimensionError("recons_trans: shapes differ");
  return mean_abs_error(t_from_pair, t_true, "recons_trans pair") +
         mean_abs_error(t_from_gen, t_true, "recons_trans generated") + t_self.abs().mean();
}

torch::Tensor adv_real_newimg(const torch::Tensor& d_real, const torch::Tensor& d_fake_enc,
                              const torch::Tensor& d_fake_prior) {
  return mean_log(d_real, "adv_real_newimg real") + mean_log_complement(d_fake_enc, "adv_real_newimg encoded") +
         mean_log_complement(d_fake_prior, "adv_real_newimg prior");
}

torch::Tensor recons_newtrans(const torch::Tensor& t_prior, const torch::Tensor& t_enc,
                              const torch::Tensor& t_prior_rec, const torch::Tensor& t_enc_rec) {
  return mean_abs_error(t_prior_rec, t_prior, "recons_newtrans prior") +
         mean_abs_error(t_enc_rec, t_enc, "recons_newtrans encoded");
}

MatchValues adv_match(const MatchScores& s) {
  if (!s.true_triplet.defined()) throw DimensionError("adv_match: real triplet scores are required");
  torch::Tensor generated;
  for (const auto* fake : {&s.fake_gen, &s.fake_prior, &s.fake_enc}) {
    if (!fake->defined()) continue;
    auto term = mean_log_complement(*fake, "adv_match generated");
    generated = generated.defined() ? generated + term : term;
  }
  auto match_d = mean_log(s.true_triplet, "adv_match real");
  if (generated.defined()) match_d = match_d + generated;
  for (const auto* wrong : {&s.wrong_t, &s.wrong_y}) {
    if (wrong->defined()) match_d = match_d + mean_log_complement(*wrong, "adv_match wrong");
  }
  if (!generated.defined()) generated = torch::zeros({}, s.true_triplet.options());
  return {match_d, generated};
}

GeneratorLossForm parse_generator_loss_form(const std::string& text) {
  if (text == "non_saturating") return GeneratorLossForm::non_saturating;
  if (text == "saturating") return GeneratorLossForm::saturating;
  throw ConfigError("generator_loss must be non_saturating or saturating, got '" + text + "'");
}

const char* to_string(GeneratorLossForm form) noexcept {
  return form == GeneratorLossForm::saturating ? "saturating" : "non_saturating";
}

torch::Tensor generator_adversarial(const torch::Tensor& d_fake, GeneratorLossForm form) {
  if (form == GeneratorLossForm::saturating) return mean_log_complement(d_fake, "generator adversarial");
  return -mean_log(d_fake, "generator adversarial");
}

void LossWeights::validate() const {
  if (!(lambda >= 0) || !(lambda1 >= 0) || !(lambda2 >= 0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

ObjectiveTotals combine_objective(const LossTerms& t, const LossWeights& w) {
  w.validate();
  auto total_g = or_zero(t.adv_g) + w.lambda * or_zero(t.match_g_surrogate) +
                 w.lambda1 * (or_zero(t.recons_img_cyc) + or_zero(t.recons_img_self)) +
                 w.lambda2 * (or_zero(t.recons_trans) + or_zero(t.recons_newtrans));
  auto total_d = -(or_zero(t.real_img) + or_zero(t.real_newtrans) + or_zero(t.real_newimg)) - w.lambda * or_zero(t.match_d);
  return {total_g, total_d};
}

bool LossBreakdown::all_finite() const {
  for (double v : {real_img, recons_img_cyc, recons_img_self, real_newtrans, recons_trans, real_newimg,
                   recons_newtrans, match_d, match_g, adv_g, match_g_surrogate, total_g, total_d}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"real_img", real_img},
          {"recons_img_cyc", recons_img_cyc},
          {"recons_img_self", recons_img_self},
          {"real_newtrans", real_newtrans},
          {"recons_trans", recons_trans},
          {"real_newimg", real_newimg},
          {"recons_newtrans", recons_newtrans},
          {"match_d", match_d},
          {"match_g", match_g},
          {"adv_g", adv_g},
          {"match_g_surrogate", match_g_surrogate},
          {"total_g", total_g},
          {"total_d", total_d},
          {"lambda", lambda},
          {"lambda1", lambda1},
          {"lambda2", lambda2}};
}

LossBreakdown LossBreakdown::from_json(const nlohmann::json& j) {
  LossBreakdown b;
  b.real_img = j.at("real_img");
  b.recons_img_cyc = j.at("recons_img_cyc");
  b.recons_img_self = j.at("recons_img_self");
  b.real_newtrans = j.at("real_newtrans");
  b.recons_trans = j.at("recons_trans");
  b.real_newimg = j.at("real_newimg");
  b.recons_newtrans = j.at("recons_newtrans");
  b.match_d = j.at("match_d");
  b.match_g = j.at("match_g");
  b.adv_g = j.value("adv_g", 0.0);
  b.match_g_surrogate = j.value("match_g_surrogate", 0.0);
  b.total_g = j.at("total_g");
  b.total_d = j.at("total_d");
  b.lambda = j.at("lambda");
  b.lambda1 = j.at("lambda1");
  b.lambda2 = j.at("lambda2");
  return b;
}

LossBreakdown full_objective(const LossTerms& t, const LossWeights& w) {
  const auto totals = combine_objective(t, w);
  LossBreakdown b;
  b.real_img = value_of(t.real_img);
  b.recons_img_cyc = value_of(t.recons_img_cyc);
  b.recons_img_self = value_of(t.recons_img_self);
  b.real_newtrans = value_of(t.real_newtrans);
  b.recons_trans = value_of(t.recons_trans);
  b.real_newimg = value_of(t.real_newimg);
  b.recons_newtrans = value_of(t.recons_newtrans);
  b.match_d = value_of(t.match_d);
  b.match_g = value_of(t.match_g);
  b.adv_g = value_of(t.adv_g);
  b.match_g_surrogate = value_of(t.match_g_surrogate);
  b.total_g = value_of(totals.total_g);
  b.total_d = value_of(totals.total_d);
  b.lambda = w.lambda;
  b.lambda1 = w.lambda1;
  b.lambda2 = w.lambda2;
  return b;
}

}  // namespace tegan
