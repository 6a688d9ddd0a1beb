#include "mantra/slow_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"

namespace mantra {

std::size_t MaskPlan::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t mask_count(std::size_t length, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("slow.rho must lie in (0, 1), got " + std::to_string(rho));
  const auto count = static_cast<std::size_t>(std::llround(rho * static_cast<double>(length)));
  if (count == 0 || count >= length) {
    throw ConfigError("slow.rho=" + std::to_string(rho) + " masks " + std::to_string(count) + " of " +
                      std::to_string(length) + " steps; need between 1 and T-1");
  }
  return count;
}

MaskPlan select_mask(const Tensor& x, std::span<const double> scores, double rho, double epsilon, Rng& rng) {
  if (x.rank() != 2) throw ShapeError("select_mask: expected [T, D], got " + shape_string(x.shape()));
  const std::size_t T = x.dim(0), D = x.dim(1);
  if (scores.size() != T) throw ShapeError("select_mask: scores length differs from T");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("slow.epsilon must lie in [0, 1]");
  const std::size_t count = mask_count(T, rho);

  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  MaskPlan plan{std::vector<std::uint8_t>(T, 0), x, rho, epsilon};
  std::size_t kept = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (rng.uniform() >= epsilon) {
      plan.mask[order[i]] = 1;
      ++kept;
    }
  }
  std::vector<std::size_t> pool;
  for (std::size_t t = 0; t < T; ++t)
    if (!plan.mask[t]) pool.push_back(t);
  rng.shuffle(pool.begin(), pool.end());
  for (std::size_t i = 0; i < count - kept; ++i) plan.mask[pool[i]] = 1;

  for (std::size_t t = 0; t < T; ++t)
    if (plan.mask[t])
      for (std::size_t d = 0; d < D; ++d) plan.masked_input.at(t, d) = 0.0;
  return plan;
}

std::vector<MaskPlan> select_masks(const Tensor& x, const Tensor& importance, double rho, double epsilon, Rng& rng) {
  if (x.rank() != 3 || importance.rank() != 2 || importance.dim(0) != x.dim(0) || importance.dim(1) != x.dim(1)) {
    throw ShapeError("select_masks: expected x [N, T, D] and importance [N, T], got " + shape_string(x.shape()) +
                     " and " + shape_string(importance.shape()));
  }
  const std::size_t N = x.dim(0), T = x.dim(1), D = x.dim(2);
  std::vector<MaskPlan> plans;
  plans.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    Tensor window({T, D}, std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(n * T * D),
                                              x.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * T * D)));
    plans.push_back(select_mask(window, importance.data().subspan(n * T, T), rho, epsilon, rng));
  }
  return plans;
}

Tensor stack_masked(std::span<const MaskPlan> plans) {
  if (plans.empty()) throw std::invalid_argument("stack_masked: no plans");
  const Shape& s = plans.front().masked_input.shape();
  Tensor out({plans.size(), s[0], s[1]});
  std::size_t offset = 0;
  for (const MaskPlan& p : plans) {
    if (p.masked_input.shape() != s) throw ShapeError("stack_masked: plans differ in shape");
    std::copy(p.masked_input.data().begin(), p.masked_input.data().end(), out.data().begin() + offset);
    offset += p.masked_input.size();
  }
  return out;
}

SlowLossReport SlowLossVars::report() const {
  return {masked.value().item(), unmasked.value().item(), total.value().item(), lambda};
}

SlowLossVars slow_losses(Var g_out, const Tensor& x, std::span<const MaskPlan> plans, double lambda) {
  if (g_out.shape() != x.shape()) {
    throw ShapeError("slow_losses: reconstruction " + shape_string(g_out.shape()) + " vs target " +
                     shape_string(x.shape()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("slow.lambda must lie in [0, 1]");
  const std::size_t N = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t T = x.dim(x.rank() - 2), D = x.dim(x.rank() - 1);
  if (plans.size() != N) throw ShapeError("slow_losses: one plan per window required");

  Tensor w_masked(x.shape()), w_unmasked(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const MaskPlan& p = plans[n];
    if (p.mask.size() != T) throw ShapeError("slow_losses: plan length differs from T");
    const std::size_t m = p.masked_count();
    if (m == 0 || m == T) throw std::invalid_argument("slow_losses: plan must mask between 1 and T-1 steps");
    const double wm = 1.0 / (static_cast<double>(D * m) * static_cast<double>(N));
    const double wu = 1.0 / (static_cast<double>(D * (T - m)) * static_cast<double>(N));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = (n * T + t) * D + d;
        (p.mask[t] ? w_masked : w_unmasked)[i] = p.mask[t] ? wm : wu;
      }
  }
  Tape& tape = g_out.tape();
  Var diff = g_out - tape.constant(x);
  Var sq = diff * diff;
  SlowLossVars out;
  out.masked = sum(sq * tape.constant(std::move(w_masked)));
  out.unmasked = sum(sq * tape.constant(std::move(w_unmasked)));
  out.total = out.masked * lambda + out.unmasked * (1.0 - lambda);
  out.lambda = lambda;
  return out;
}

Var slow_reconstruct(Backbone& g, Tape& tape, const Tensor& masked, const ForwardContext& ctx) {
  return g.reconstruct(tape, masked, ctx);
}

}  // namespace mantra
