#pragma once

#include <cstdint>
#include <span>

#include "canseg/tensor.hpp"

namespace canseg {

struct LossParams {
  double beta = 1.0;       // weighting exponent, valid interval [0, 1]
  double smooth = 1e-4;    // S term shared by numerator and denominator

  void validate() const;
};

/// Smoothed soft dice: 2(sum gt*pred + S/2) / (sum gt^2 + sum pred^2 + S).
/// Equals 1 for a perfect match and for the empty-vs-empty case.
double soft_dice(std::span<const std::uint8_t> gt, std::span<const float> pred, double S);

/// Weighted dice loss: (1 - dsc)^beta * (-dsc), with 0^0 := 1 so beta = 0
/// reduces exactly to the plain soft-dice loss.
double wdl(std::span<const std::uint8_t> gt, std::span<const float> pred,
           const LossParams& p);

/// Analytic d(wdl)/d(pred); matches central finite differences.
void wdl_gradient(std::span<const std::uint8_t> gt, std::span<const float> pred,
                  const LossParams& p, std::span<float> grad_out);

/// Weighting-factor family G(x, y) = -(1 - x)^y, x in [0,1].
double weight_factor_G(double x, double y);

/// Training gradient: the weight factor (1-dsc)^beta acts as a per-sample
/// modulation of the soft-dice descent direction (it is held constant in
/// the backward pass). Minimizing the raw product instead would stall at
/// dsc = 1/(1+beta). Identical to wdl_gradient at beta = 0.
void wdl_training_gradient(std::span<const std::uint8_t> gt, std::span<const float> pred,
                           const LossParams& p, std::span<float> grad_out);

/// Autograd node for training: applies wdl to the foreground channel of a
/// (2,D,H,W) probability tensor against a binary target. The forward value
/// is wdl exactly; the backward pass uses wdl_training_gradient.
nn::Tensor wdl_loss(const nn::Tensor& probs, const std::uint8_t* gt, const LossParams& p);

}  // namespace canseg
