#pragma once

// Controlled masked reconstruction for the slow learner.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mantra/autodiff.hpp"
#include "mantra/autoformer.hpp"
#include "mantra/rng.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

struct MaskPlan {
  std::vector<std::uint8_t> mask;  // 1 = masked
  Tensor masked_input;             // [T, D], zero on masked rows
  double rho = 0.0;
  double epsilon = 0.0;

  std::size_t masked_count() const;
};

/// Number of masked steps for a window of length T; throws ConfigError when
/// it would be 0 or T.
std::size_t mask_count(std::size_t length, double rho);

/// Masks the round(rho * T) most important steps. Each of those slots is
/// kept with probability 1 - epsilon; freed slots are refilled uniformly from
/// the steps not kept, so epsilon = 1 gives a uniform random mask. Ties in
/// `scores` go to the earlier step.
MaskPlan select_mask(const Tensor& x, std::span<const double> scores, double rho, double epsilon, Rng& rng);

/// One plan per window of x [N, T, D] from importance [N, T].
std::vector<MaskPlan> select_masks(const Tensor& x, const Tensor& importance, double rho, double epsilon, Rng& rng);

/// Masked inputs of a batch of plans, [N, T, D].
Tensor stack_masked(std::span<const MaskPlan> plans);

struct SlowLossReport {
  double loss_masked = 0.0;
  double loss_unmasked = 0.0;
  double loss_total = 0.0;
  double lambda = 0.5;
};

struct SlowLossVars {
  Var masked;
  Var unmasked;
  Var total;
  double lambda = 0.5;

  SlowLossReport report() const;
};

/// L_m and L_um per window, then averaged over the batch;
/// L_S = lambda * L_m + (1 - lambda) * L_um. g_out and x are [N, T, D]
/// (or [T, D] with a single plan).
SlowLossVars slow_losses(Var g_out, const Tensor& x, std::span<const MaskPlan> plans, double lambda);

/// Reconstruction of the masked windows by learner g, aligned with x.
Var slow_reconstruct(Backbone& g, Tape& tape, const Tensor& masked, const ForwardContext& ctx);

}  // namespace mantra
