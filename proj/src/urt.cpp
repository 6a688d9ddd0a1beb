#include "mantra/urt.hpp"

#include <cmath>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"
#include "mantra/rng.hpp"

namespace mantra {

namespace {

Var flatten(Var pred) {
  const Shape& s = pred.shape();
  if (s.size() < 2) throw ShapeError("urt: learner forecasts need a batch axis, got " + shape_string(s));
  return reshape(pred, {s[0], shape_size(s) / s[0]});
}

}  // namespace

std::vector<std::string> validate(const UrtConfig& cfg) {
  if (cfg.heads == 0) throw ConfigError("urt.heads must be positive");
  if (cfg.key_dim == 0) throw ConfigError("urt.key_dim must be positive");
  if (!(cfg.omega >= 0.0)) throw ConfigError("urt.omega must be nonnegative");
  std::vector<std::string> warnings;
  if (cfg.heads > 1 && !cfg.final_map) warnings.push_back("urt.final_map enabled because heads > 1");
  return warnings;
}

UniversalRepresentation universal_representation(std::span<const Var> preds) {
  if (preds.empty()) throw std::invalid_argument("universal_representation: no learners");
  std::vector<Var> flat;
  flat.reserve(preds.size());
  for (Var p : preds) {
    flat.push_back(flatten(p));
    if (flat.back().shape() != flat.front().shape()) throw ShapeError("universal_representation: forecasts differ");
  }
  Var cat = concat(flat, 1);
  return {cat, mean_axis(cat, 0)};
}

UrtLayer::UrtLayer(const std::string& name, const UrtConfig& cfg, std::size_t learners, std::size_t width,
                   std::uint64_t seed)
    : cfg_(cfg), learners_(learners), width_(width), final_map_(cfg.final_map || cfg.heads > 1) {
  validate(cfg_);
  if (learners == 0 || width == 0) throw ConfigError("urt needs at least one learner and a nonempty forecast");
  Rng rng(seed);
  const double inv_heads = 1.0 / static_cast<double>(cfg.heads);
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    const std::string prefix = name + ".head" + std::to_string(j);
    UrtHead h{Linear(prefix + ".query", learners * width, cfg.key_dim, true, rng),
              Linear(prefix + ".key", width, cfg.key_dim, true, rng), Linear()};
    if (cfg.heads == 1) {
      // Uniform attention at start: the layer begins as the mean of the learners.
      h.query.weight.value.fill(0.0);
      h.query.bias.value.fill(0.0);
    }
    if (final_map_) {
      h.final = Linear(prefix + ".final", width, width, true, rng);
      h.final.weight.value.fill(0.0);
      for (std::size_t i = 0; i < width; ++i) h.final.weight.value.at(i, i) = inv_heads;
      h.final.bias.value.fill(0.0);
    }
    heads_.push_back(std::move(h));
  }
}

AttentionRecord UrtLayer::attention_scores(Tape& tape, std::span<const Var> preds) {
  if (preds.size() != learners_) {
    throw ShapeError("urt: expected " + std::to_string(learners_) + " learners, got " + std::to_string(preds.size()));
  }
  const UniversalRepresentation rep = universal_representation(preds);
  if (rep.mean.shape().back() != learners_ * width_) throw ShapeError("urt: forecast width mismatch");
  std::vector<Var> means;
  for (Var p : preds) means.push_back(mean_axis(flatten(p), 0));
  Var f_bar = concat(means, 0);  // [M, P]

  const double inv_sqrt_l = 1.0 / std::sqrt(static_cast<double>(cfg_.key_dim));
  std::vector<Var> betas;
  for (UrtHead& h : heads_) {
    Var q = h.query(tape, rep.mean);  // [1, l]
    Var k = h.key(tape, f_bar);       // [M, l]
    betas.push_back(matmul(q, transpose(k)) * inv_sqrt_l);
  }
  Var beta = concat(betas, 0);
  return {softmax(beta), beta};
}

UrtOutput UrtLayer::operator()(Tape& tape, std::span<const Var> preds) {
  AttentionRecord att = attention_scores(tape, preds);
  const Shape out_shape = preds.front().shape();
  const std::size_t N = out_shape[0];
  std::vector<Var> rows;
  for (Var p : preds) rows.push_back(reshape(p, {1, N * width_}));
  Var stacked = concat(rows, 0);  // [M, N * P]

  Var total;
  for (std::size_t j = 0; j < heads_.size(); ++j) {
    Var alpha_j = slice(att.alpha, 0, j, j + 1);
    Var mixed = reshape(matmul(alpha_j, stacked), {N, width_});
    if (final_map_) mixed = heads_[j].final(tape, mixed);
    total = total.valid() ? total + mixed : mixed;
  }
  return {reshape(total, out_shape), att};
}

std::vector<Parameter*> UrtLayer::parameters() {
  std::vector<Parameter*> out;
  for (UrtHead& h : heads_) {
    h.query.collect(out);
    h.key.collect(out);
    if (final_map_) h.final.collect(out);
  }
  return out;
}

std::size_t UrtLayer::parameter_count() { return count_parameters(parameters()); }

Var urt_regularizer(Var alpha) {
  if (alpha.shape().size() != 2) throw ShapeError("urt_regularizer: expected [S, M] attention");
  const std::size_t S = alpha.shape()[0];
  Tensor eye({S, S});
  for (std::size_t i = 0; i < S; ++i) eye.at(i, i) = 1.0;
  Var gram = matmul(alpha, transpose(alpha)) - alpha.tape().constant(std::move(eye));
  return sum(gram * gram);
}

void dump_attention(std::ostream& os, const Tensor& alpha) {
  for (std::size_t j = 0; j < alpha.dim(0); ++j)
    for (std::size_t i = 0; i < alpha.dim(1); ++i) os << j << ',' << i << ',' << alpha.at(j, i) << '\n';
}

}  // namespace mantra
