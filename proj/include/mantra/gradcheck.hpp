#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "mantra/autodiff.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

class Rng;

/// Scalar-valued function of one tensor input, recorded on a tape.
using ScalarFn = std::function<Var(Tape&, Var)>;
/// Scalar-valued loss of module parameters, recorded on a tape.
using LossFn = std::function<Var(Tape&)>;

/// Max over components of |analytic - numeric| / max(1, |numeric|), with the
/// numeric gradient from central differences of step h.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Same measure over parameter coordinates. With `max_coords` > 0 each
/// parameter is probed at up to that many coordinates drawn from `rng`;
/// otherwise every coordinate is probed. Parameter values are restored.
double grad_check_params(const LossFn& f, std::span<Parameter* const> params, double h = 1e-5,
                         std::size_t max_coords = 0, Rng* rng = nullptr);

}  // namespace mantra

#include <cstdint>
#include <string>
#include <vector>

namespace mantra {

struct GradCheckResult {
  std::string name;
  std::size_t draws = 0;
  double max_error = 0.0;
  bool passed = false;
};

struct GradSuiteConfig {
  std::size_t draws = 50;
  std::uint64_t seed = 1;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::size_t coords_per_param = 2;  // sampled coordinates per parameter in the model-level checks
};

/// Every differentiable op, each module, and the full model forward on a
/// tiny config (B = 8, O = 4, d_model = 8, M = 2), each over `draws` random
/// inputs and parameter initializations.
std::vector<GradCheckResult> run_gradcheck_suite(const GradSuiteConfig& cfg);

}  // namespace mantra
