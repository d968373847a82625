#include "canseg/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace canseg {

namespace {

struct DiceTerms {
  double inter = 0;   // sum gt * pred
  double denom = 0;   // sum gt^2 + sum pred^2
  double dsc = 0;
};

DiceTerms dice_terms(std::span<const std::uint8_t> gt, std::span<const float> pred, double S) {
  if (gt.size() != pred.size()) throw std::invalid_argument("soft_dice: shape mismatch");
  if (!(S > 0)) throw std::invalid_argument("soft_dice: smoothing term must be > 0");
  DiceTerms t;
  double psq = 0, gsq = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i] ? 1.0 : 0.0;
    const double p = pred[i];
    t.inter += g * p;
    gsq += g;  // g^2 == g for binary labels
    psq += double(p) * p;
  }
  t.denom = gsq + psq;
  t.dsc = (2.0 * t.inter + S) / (t.denom + S);
  return t;
}

// d(wdl)/d(dsc) = beta (1-d)^(beta-1) d - (1-d)^beta
double wdl_ddsc(double d, double beta) {
  if (beta == 0.0) return -1.0;
  const double base = std::max(1.0 - d, 1e-12);
  return beta * std::pow(base, beta - 1.0) * d - std::pow(base, beta);
}

}  // namespace

void LossParams::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("loss: beta must lie in [0,1]");
  if (!(smooth > 0.0)) throw std::invalid_argument("loss: smooth must be > 0");
}

double soft_dice(std::span<const std::uint8_t> gt, std::span<const float> pred, double S) {
  return dice_terms(gt, pred, S).dsc;
}

double wdl(std::span<const std::uint8_t> gt, std::span<const float> pred, const LossParams& p) {
  p.validate();
  const double d = soft_dice(gt, pred, p.smooth);
  const double weight = p.beta == 0.0 ? 1.0 : std::pow(1.0 - d, p.beta);  // 0^0 := 1
  return weight * (-d);
}

void wdl_gradient(std::span<const std::uint8_t> gt, std::span<const float> pred,
                  const LossParams& p, std::span<float> grad_out) {
  p.validate();
  if (grad_out.size() != pred.size()) throw std::invalid_argument("wdl_gradient: shape mismatch");
  const DiceTerms t = dice_terms(gt, pred, p.smooth);
  const double dl_dd = wdl_ddsc(t.dsc, p.beta);
  const double denom = t.denom + p.smooth;
  const double num = 2.0 * t.inter + p.smooth;
  // d(dsc)/d(pred_i) = (2 gt_i * denom - 2 pred_i * num) / denom^2
  const double a = 2.0 / denom;
  const double b = 2.0 * num / (denom * denom);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = gt[i] ? 1.0 : 0.0;
    grad_out[i] = float(dl_dd * (a * g - b * pred[i]));
  }
}

double weight_factor_G(double x, double y) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("weight_factor_G: x must be in [0,1]");
  return -std::pow(1.0 - x, y);
}

void wdl_training_gradient(std::span<const std::uint8_t> gt, std::span<const float> pred,
                           const LossParams& p, std::span<float> grad_out) {
  p.validate();
  if (grad_out.size() != pred.size())
    throw std::invalid_argument("wdl_training_gradient: shape mismatch");
  const DiceTerms t = dice_terms(gt, pred, p.smooth);
  const double weight = p.beta == 0.0 ? 1.0 : std::pow(1.0 - t.dsc, p.beta);
  const double denom = t.denom + p.smooth;
  const double num = 2.0 * t.inter + p.smooth;
  const double a = 2.0 / denom;
  const double b = 2.0 * num / (denom * denom);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = gt[i] ? 1.0 : 0.0;
    grad_out[i] = float(-weight * (a * g - b * pred[i]));
  }
}

nn::Tensor wdl_loss(const nn::Tensor& probs, const std::uint8_t* gt, const LossParams& p) {
  p.validate();
  const auto& s = probs.shape();
  if (s.size() != 4 || s[0] != 2)
    throw std::invalid_argument("wdl_loss: expected (2,D,H,W) probabilities");
  const std::size_t n = probs.size() / 2;
  const float* fg = probs.data() + n;  // channel 1 = foreground

  nn::Tensor out = nn::detail::op_output({1}, {probs.n});
  auto target = std::make_shared<std::vector<std::uint8_t>>(gt, gt + n);
  out.data()[0] = float(wdl({target->data(), n}, {fg, n}, p));

  if (out.n->requires_grad) {
    nn::Node* self = out.n.get();
    nn::NodePtr pn = probs.n;
    LossParams params = p;
    out.n->backward_fn = [self, pn, target, params, n]() {
      pn->ensure_grad();
      std::vector<float> g(n);
      wdl_training_gradient({target->data(), n}, {pn->value.data() + n, n}, params, g);
      const float seed = self->grad[0];
      float* gp = pn->grad.data() + n;
      for (std::size_t i = 0; i < n; ++i) gp[i] += seed * g[i];
    };
  }
  return out;
}

}  // namespace canseg
