#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mantra/ensemble.hpp"
#include "mantra/errors.hpp"
#include "mantra/ops.hpp"
#include "mantra/training.hpp"
#include "test_util.hpp"

using namespace mantra;
using mantra::testing::random_tensor;
using mantra::testing::tiny_backbone;

namespace {

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

ModelConfig tiny_model(bool fuse = true) {
  ModelConfig m;
  m.backbone = tiny_backbone(2, 1);
  m.ensemble.learners = 3;
  m.ensemble.seed = 5;
  m.ensemble.fuse_slow = fuse;
  m.urt.key_dim = 4;
  return m;
}

Parameter* find(std::vector<Parameter*> params, const std::string& name) {
  for (Parameter* p : params) {
    if (p->name == name) return p;
  }
  FAIL("no parameter " << name);
  return nullptr;
}

}  // namespace

TEST_CASE("half mse") {
  Rng rng(3);
  Tape tape;
  const Tensor y = random_tensor({3, 4, 2}, rng), p = random_tensor({3, 4, 2}, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) oracle += 0.5 * (p[i] - y[i]) * (p[i] - y[i]);
  oracle /= static_cast<double>(y.size());
  CHECK(std::abs(half_mse(tape.constant(p), y).value().item() - oracle) < 1e-12);
  CHECK(half_mse(tape.constant(y), y).value().item() == 0.0);
  CHECK(half_mse(tape.constant(Tensor({1, 1, 1}, 2.0)), Tensor({1, 1, 1})).value().item() == 2.0);
  CHECK_THROWS_AS(half_mse(tape.constant(p), Tensor({3, 4, 1})), ShapeError);
}

TEST_CASE("fusion") {
  Rng rng(7);
  const Tensor x = random_tensor({2, 8, 2}, rng);

  SUBCASE("without slow features the learners are plain backbones") {
    MantraModel model(tiny_model(false));
    const std::vector<std::uint64_t> seeds = model.config().ensemble.resolved_seeds();
    Tape tape;
    const std::vector<Var> preds = model.learner_predictions(tape, x, {}, nullptr);
    for (std::size_t i = 0; i < 3; ++i) {
      BackboneConfig plain = tiny_backbone(2, 1);
      Backbone ref("fast" + std::to_string(i), plain, seeds[i]);
      Tape ref_tape;
      const Tensor expected = ref.forward(ref_tape, x, {}).prediction.value();
      for (std::size_t j = 0; j < expected.size(); ++j) CHECK(preds[i].value()[j] == expected[j]);
    }
  }
  SUBCASE("zero seasonal head passes the fast trend through") {
    MantraModel model(tiny_model());
    find(model.fast(0).parameters(), "fast0.theta_s.weight")->value.fill(0.0);
    find(model.fast(0).parameters(), "fast0.theta_s.bias")->value.fill(0.0);
    const SharedFeatures shared = model.slow_features(x);
    Tape tape;
    const LearnerFeatures f = model.fast(0).forward(tape, x, {}, &shared);
    const Tensor trend = f.trend.value();
    const std::size_t L = trend.dim(1);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t t = 0; t < 4; ++t) CHECK(f.prediction.value().at(n, t, 0) == trend.at(n, L - 4 + t, 0));
    }
  }
  SUBCASE("forecast loss reaches fast learners and URT but never the slow learner") {
    MantraModel model(tiny_model());
    const Tensor y = random_tensor({2, 4, 1}, rng);
    for (Parameter* p : model.parameters()) p->zero_grad();
    Tape tape;
    const SharedFeatures shared = model.slow_features(x);
    const std::vector<Var> preds = model.learner_predictions(tape, x, {}, &shared);
    tape.backward(half_mse(model.fuse(tape, preds).prediction, y));
    for (Parameter* p : model.slow_parameters()) {
      for (double g : p->grad.data()) CHECK(g == 0.0);
    }
    double fast_norm = 0.0;
    for (Parameter* p : model.fast_parameters()) {
      for (double g : p->grad.data()) fast_norm += g * g;
    }
    CHECK(fast_norm > 0.0);
  }
  SUBCASE("shapes and finiteness") {
    MantraModel model(tiny_model());
    const std::vector<Tensor> preds = model.predict_learners(x);
    CHECK(preds.size() == 3);
    const Tensor out = model.predict(x);
    CHECK(out.shape() == Shape{2, 4, 1});
    for (double v : out.data()) CHECK(std::isfinite(v));
    const SharedFeatures shared = model.slow_features(x);
    CHECK(shared.seasonal.shape() == Shape{2, 8, 8});
  }
  SUBCASE("learner diversity comes from the seeds") {
    MantraModel model(tiny_model());
    const std::vector<Tensor> preds = model.predict_learners(x);
    CHECK_FALSE(same(preds[0], preds[1]));
    BackboneConfig c = tiny_backbone(2, 1);
    Backbone a("f", c, 42), b("f", c, 42);
    Tape tape;
    CHECK(same(a.forward(tape, x, {}).prediction.value(), b.forward(tape, x, {}).prediction.value()));
  }
  SUBCASE("mean aggregation") {
    MantraModel model(tiny_model());
    const std::vector<Tensor> preds = model.predict_learners(x);
    const Tensor mean = model.combine(preds, Aggregation::Mean);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      CHECK(mean[i] == doctest::Approx((preds[0][i] + preds[1][i] + preds[2][i]) / 3).epsilon(1e-14));
    }
  }
}

TEST_CASE("ensemble config") {
  EnsembleConfig e;
  e.learners = 0;
  CHECK_THROWS_AS(validate(e), ConfigError);
  e.learners = 2;
  e.seeds = {1, 1};
  CHECK_THROWS_AS(validate(e), ConfigError);
  e.seeds = {1, 2, 3};
  CHECK_THROWS_AS(validate(e), ConfigError);
  e.seeds = {4, 9};
  CHECK(e.resolved_seeds() == std::vector<std::uint64_t>{4, 9});
  e.seeds.clear();
  const auto seeds = e.resolved_seeds();
  CHECK(seeds.size() == 2);
  CHECK(seeds[0] != seeds[1]);
}

TEST_CASE("default parameter budget and adaptation mask") {
  ModelConfig cfg;  // M = 3, d_model = 16, I = 48, O = 24
  MantraModel model(cfg);
  const ParameterCounts c = model.counts();
  CHECK(c.fast == 3 * 7732);
  CHECK(c.slow == 7697);
  CHECK(c.urt == 784);
  const FreezeReport r = adaptation_freeze_mask(model);
  CHECK(r.trainable == c.urt);
  CHECK(r.total == c.total());
  CHECK(r.fraction < 0.05);
  for (Parameter* p : model.slow_parameters()) CHECK_FALSE(p->trainable);
  for (Parameter* p : model.fast_parameters()) CHECK_FALSE(p->trainable);
  for (Parameter* p : model.urt_parameters()) CHECK(p->trainable);

  ModelConfig fm = cfg;
  fm.urt.final_map = true;
  MantraModel with_map(fm);
  CHECK(adaptation_freeze_mask(with_map).fraction < 0.05);

  const FreezeReport b = backbone_freeze_mask(model);
  CHECK(b.trainable == c.fast + c.slow);
  for (Parameter* p : model.urt_parameters()) CHECK_FALSE(p->trainable);
}
