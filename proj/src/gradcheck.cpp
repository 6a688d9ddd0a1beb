#include "mantra/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mantra/errors.hpp"
#include "mantra/rng.hpp"

namespace mantra {

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

double eval_scalar(const LossFn& f) {
  Tape tape;
  const double v = f(tape).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    if (y.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    tape.backward(y);
    analytic = tape.grad(xv);
  }
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval_scalar([&](Tape& t) { return f(t, t.constant(probe)); });
    probe[i] = orig - h;
    const double down = eval_scalar([&](Tape& t) { return f(t, t.constant(probe)); });
    probe[i] = orig;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check_params(const LossFn& f, std::span<Parameter* const> params, double h, std::size_t max_coords,
                         Rng* rng) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (max_coords > 0 && rng == nullptr) throw std::invalid_argument("grad_check: sampling needs an rng");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    if (loss.value().size() != 1) throw ShapeError("grad_check: loss must be scalar-valued");
    tape.backward(loss);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords > 0 && coords.size() > max_coords) {
      rng->shuffle(coords.begin(), coords.end());
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval_scalar(f);
      p->value[i] = orig - h;
      const double down = eval_scalar(f);
      p->value[i] = orig;
      worst = std::max(worst, rel_error(p->grad[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace mantra
