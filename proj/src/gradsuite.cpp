#include <algorithm>
#include <functional>

#include "mantra/autocorrelation.hpp"
#include "mantra/decomposition.hpp"
#include "mantra/ensemble.hpp"
#include "mantra/gradcheck.hpp"
#include "mantra/ops.hpp"
#include "mantra/rng.hpp"
#include "mantra/slow_learner.hpp"
#include "mantra/urt.hpp"

namespace mantra {

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// sum(f(x) * w) with a fixed random weight, so every output coordinate matters.
double weighted_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, Rng& rng, double h) {
  Tape probe;
  const Shape out = f(probe, probe.constant(x)).shape();
  const Tensor w = random_tensor(out, rng);
  return grad_check([&](Tape& t, Var v) { return sum(f(t, v) * t.constant(w)); }, x, h);
}

ModelConfig tiny_model(std::uint64_t seed) {
  ModelConfig m;
  BackboneConfig& b = m.backbone;
  b.input_len = 8;
  b.pred_len = 4;
  b.d_model = 8;
  b.d_ff = 16;
  b.enc_layers = 1;
  b.dec_layers = 1;
  b.heads = 2;
  b.kernel = 5;
  b.in_dim = 2;
  b.out_dim = 1;
  m.ensemble.learners = 2;
  m.ensemble.seed = seed;
  m.urt.key_dim = 4;
  m.urt.final_map = true;
  return m;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradSuiteConfig& cfg) {
  Rng rng(cfg.seed);
  const double h = cfg.h;
  using Draw = std::function<double(std::size_t)>;
  std::vector<std::pair<std::string, Draw>> checks;

  auto op = [&](std::string name, std::function<double()> body) {
    checks.emplace_back(std::move(name), [body](std::size_t) { return body(); });
  };

  op("add", [&] {
    const Tensor b = random_tensor({3, 4}, rng);
    return weighted_check([&](Tape& t, Var x) { return x + t.constant(b); }, random_tensor({3, 4}, rng), rng, h);
  });
  op("sub", [&] {
    const Tensor a = random_tensor({2, 3, 4}, rng);
    return weighted_check([&](Tape& t, Var x) { return t.constant(a) - x; }, random_tensor({2, 3, 4}, rng), rng, h);
  });
  op("mul_broadcast", [&] {
    const Tensor a = random_tensor({2, 3, 4}, rng);
    return weighted_check([&](Tape& t, Var x) { return t.constant(a) * x; }, random_tensor({4}, rng), rng, h);
  });
  op("scale", [&] {
    return weighted_check([&](Tape&, Var x) { return x * 1.7; }, random_tensor({5}, rng), rng, h);
  });
  op("matmul", [&] {
    const Tensor b = random_tensor({4, 2}, rng);
    return weighted_check([&](Tape& t, Var x) { return matmul(x, t.constant(b)); }, random_tensor({3, 4}, rng), rng,
                          h);
  });
  op("transpose", [&] {
    return weighted_check([&](Tape&, Var x) { return transpose(x); }, random_tensor({3, 5}, rng), rng, h);
  });
  op("linear", [&] {
    const Tensor x = random_tensor({2, 3, 4}, rng), bias = random_tensor({5}, rng);
    return weighted_check([&](Tape& t, Var w) { return linear(t.constant(x), w, t.constant(bias)); },
                          random_tensor({4, 5}, rng), rng, h);
  });
  op("concat", [&] {
    const Tensor b = random_tensor({2, 3, 2}, rng);
    return weighted_check([&](Tape& t, Var x) { return concat({x, t.constant(b), x}, 2); },
                          random_tensor({2, 3, 4}, rng), rng, h);
  });
  op("slice", [&] {
    return weighted_check([&](Tape&, Var x) { return slice(x, 1, 1, 4); }, random_tensor({2, 5, 3}, rng), rng, h);
  });
  op("reshape", [&] {
    return weighted_check([&](Tape&, Var x) { return reshape(x, {3, 4}); }, random_tensor({2, 6}, rng), rng, h);
  });
  op("mean", [&] {
    return weighted_check([&](Tape&, Var x) { return mean(x); }, random_tensor({3, 4}, rng), rng, h);
  });
  op("mean_axis", [&] {
    const std::size_t axis = rng.index(3);
    return weighted_check([&](Tape&, Var x) { return mean_axis(x, axis); }, random_tensor({2, 3, 4}, rng), rng, h);
  });
  op("softmax", [&] {
    return weighted_check([&](Tape&, Var x) { return softmax(x); }, random_tensor({3, 5}, rng), rng, h);
  });
  op("gelu", [&] {
    return weighted_check([&](Tape&, Var x) { return gelu(x); }, random_tensor({3, 5}, rng), rng, h);
  });
  op("avg_pool_1d", [&] {
    const std::size_t L = between(rng, 3, 12);
    const std::size_t kernel = 2 * between(rng, 0, (L - 1) / 2) + 1;
    return weighted_check([&](Tape&, Var x) { return avg_pool_1d(x, kernel); }, random_tensor({2, L, 3}, rng), rng,
                          h);
  });
  op("roll", [&] {
    const std::size_t tau = rng.index(8);
    return weighted_check([&](Tape&, Var x) { return roll(x, tau); }, random_tensor({7, 2}, rng), rng, h);
  });
  op("fit_time", [&] {
    const std::size_t len = between(rng, 2, 10);
    return weighted_check([&](Tape&, Var x) { return fit_time(x, len); }, random_tensor({2, 6, 3}, rng), rng, h);
  });
  op("series_decompose", [&] {
    const std::size_t L = between(rng, 3, 16);
    const std::size_t kernel = 2 * between(rng, 0, (L - 1) / 2) + 1;
    const Tensor x = random_tensor({L, 2}, rng);
    const Tensor w = random_tensor({L, 2}, rng);
    return grad_check(
        [&](Tape& t, Var v) {
          const DecompVars d = series_decompose(v, kernel);
          return sum(d.seasonal * t.constant(w)) + sum(d.trend_cyclical * d.trend_cyclical);
        },
        x, h);
  });
  for (CorrelationPath path : {CorrelationPath::Direct, CorrelationPath::Fft}) {
    op(path == CorrelationPath::Direct ? "autocorrelation_direct" : "autocorrelation_fft", [&, path] {
      const std::size_t L = between(rng, 4, 16);
      const Tensor q = random_tensor({2, L, 4}, rng), k = random_tensor({2, L, 4}, rng),
                   v = random_tensor({2, L, 4}, rng);
      const std::size_t which = rng.index(3);
      return weighted_check(
          [&](Tape& t, Var x) {
            return autocorrelation_block(which == 0 ? x : t.constant(q), which == 1 ? x : t.constant(k),
                                         which == 2 ? x : t.constant(v), 2, 1.0, path);
          },
          which == 0 ? q : which == 1 ? k : v, rng, h);
    });
  }
  op("multihead_autocorrelation", [&] {
    Rng init(rng.next());
    MultiHeadAutoCorrelation mh("ac", AutoCorrConfig{1.0, 2, 8}, CorrelationPath::Auto, init);
    std::vector<Parameter*> params;
    mh.collect(params);
    const Tensor xq = random_tensor({2, 8, 8}, rng), xk = random_tensor({2, 6, 8}, rng);
    const Tensor w = random_tensor({2, 8, 8}, rng);
    return grad_check_params(
        [&](Tape& t) { return sum(mh(t, t.constant(xq), t.constant(xk), t.constant(xk)) * t.constant(w)); }, params,
        h, cfg.coords_per_param, &rng);
  });
  op("urt", [&] {
    UrtConfig u;
    u.heads = 1 + rng.index(2);
    u.key_dim = 3;
    u.final_map = true;
    UrtLayer layer("urt", u, 3, 4, rng.next());
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = 0.5 * rng.normal();
    }
    std::vector<Tensor> preds;
    for (int i = 0; i < 3; ++i) preds.push_back(random_tensor({5, 4, 1}, rng));
    const Tensor w = random_tensor({5, 4, 1}, rng);
    return grad_check_params(
        [&](Tape& t) {
          std::vector<Var> vars;
          for (const Tensor& p : preds) vars.push_back(t.constant(p));
          const UrtOutput out = layer(t, vars);
          return sum(out.prediction * t.constant(w)) + urt_regularizer(out.attention.alpha);
        },
        layer.parameters(), h);
  });
  op("urt_inputs", [&] {
    UrtLayer layer("urt", UrtConfig{1, 3, true, 0.1}, 2, 3, rng.next());
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = 0.5 * rng.normal();
    }
    const Tensor other = random_tensor({4, 3, 1}, rng);
    return weighted_check(
        [&](Tape& t, Var x) {
          std::vector<Var> vars = {x, t.constant(other)};
          return layer(t, vars).prediction;
        },
        random_tensor({4, 3, 1}, rng), rng, h);
  });
  op("urt_regularizer", [&] {
    return grad_check([](Tape&, Var a) { return urt_regularizer(a); }, random_tensor({2, 3}, rng), h);
  });
  op("slow_losses", [&] {
    const std::size_t T = between(rng, 4, 10);
    const Tensor x = random_tensor({2, T, 2}, rng);
    const Tensor scores = random_tensor({2, T}, rng);
    const std::vector<MaskPlan> plans = select_masks(x, scores, 0.3, rng.uniform(), rng);
    const double lambda = rng.uniform();
    return grad_check([&](Tape&, Var g) { return slow_losses(g, x, plans, lambda).total; }, random_tensor({2, T, 2}, rng),
                      h);
  });
  op("half_mse", [&] {
    const Tensor y = random_tensor({3, 4, 1}, rng);
    return grad_check([&](Tape&, Var p) { return half_mse(p, y); }, random_tensor({3, 4, 1}, rng), h);
  });

  checks.emplace_back("mantra_forward", [&](std::size_t draw) {
    MantraModel model(tiny_model(cfg.seed * 7919 + draw));
    for (Parameter* p : model.urt_parameters()) {
      for (double& v : p->value.data()) v += 0.3 * rng.normal();
    }
    const Tensor x = random_tensor({2, 8, 2}, rng), y = random_tensor({2, 4, 1}, rng);
    const SharedFeatures shared = model.slow_features(x);
    std::vector<Parameter*> params = model.fast_parameters();
    for (Parameter* p : model.urt_parameters()) params.push_back(p);
    return grad_check_params(
        [&](Tape& t) {
          const std::vector<Var> preds = model.learner_predictions(t, x, ForwardContext{}, &shared);
          const UrtOutput out = model.fuse(t, preds);
          return half_mse(out.prediction, y) + urt_regularizer(out.attention.alpha) * 0.1;
        },
        params, h, cfg.coords_per_param, &rng);
  });
  checks.emplace_back("slow_reconstruction", [&](std::size_t draw) {
    MantraModel model(tiny_model(cfg.seed * 104729 + draw));
    const Tensor x = random_tensor({2, 8, 2}, rng);
    const std::vector<MaskPlan> plans = select_masks(x, model.slow().importance(x), 0.25, 0.3, rng);
    const Tensor masked = stack_masked(plans);
    const std::vector<Parameter*> params = model.slow_parameters();
    return grad_check_params(
        [&](Tape& t) {
          return slow_losses(slow_reconstruct(model.slow(), t, masked, ForwardContext{}), x, plans, 0.5).total;
        },
        params, h, cfg.coords_per_param, &rng);
  });

  std::vector<GradCheckResult> results;
  for (auto& [name, draw] : checks) {
    GradCheckResult r{name, cfg.draws, 0.0, false};
    for (std::size_t d = 0; d < cfg.draws; ++d) r.max_error = std::max(r.max_error, draw(d));
    r.passed = r.max_error < cfg.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mantra
