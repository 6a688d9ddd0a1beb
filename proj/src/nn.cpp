#include "mantra/nn.hpp"

#include <cmath>

#include "mantra/ops.hpp"
#include "mantra/rng.hpp"

namespace mantra {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng) : has_bias_(bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform_tensor({in, out}, bound, rng));
  if (bias) this->bias = Parameter(name + ".bias", uniform_tensor({out}, bound, rng));
}

Var Linear::operator()(Tape& tape, Var x) {
  return linear(x, tape.param(weight), has_bias_ ? tape.param(bias) : Var());
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

FeedForward::FeedForward(const std::string& name, std::size_t d_model, std::size_t d_ff, double dropout, Rng& rng)
    : expand_(name + ".expand", d_model, d_ff, true, rng),
      contract_(name + ".contract", d_ff, d_model, true, rng),
      dropout_(dropout) {}

Var FeedForward::operator()(Tape& tape, Var x, const ForwardContext& ctx) {
  Var h = gelu(expand_(tape, x));
  if (ctx.training && ctx.rng != nullptr) h = dropout(h, dropout_, *ctx.rng);
  return contract_(tape, h);
}

void FeedForward::collect(std::vector<Parameter*>& out) {
  expand_.collect(out);
  contract_.collect(out);
}

std::size_t count_parameters(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace mantra
