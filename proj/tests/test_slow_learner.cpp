#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mantra/errors.hpp"
#include "mantra/gradcheck.hpp"
#include "mantra/ops.hpp"
#include "mantra/optim.hpp"
#include "mantra/slow_learner.hpp"
#include "test_util.hpp"

using namespace mantra;
using mantra::testing::random_tensor;
using mantra::testing::tiny_backbone;

namespace {

MaskPlan plan_from(const Tensor& x, std::vector<std::uint8_t> mask) {
  MaskPlan p;
  p.masked_input = x;
  const std::size_t D = x.dim(1);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) {
      for (std::size_t c = 0; c < D; ++c) p.masked_input.at(t, c) = 0.0;
    }
  }
  p.mask = std::move(mask);
  return p;
}

std::set<std::size_t> masked_set(const MaskPlan& p) {
  std::set<std::size_t> s;
  for (std::size_t t = 0; t < p.mask.size(); ++t) {
    if (p.mask[t]) s.insert(t);
  }
  return s;
}

}  // namespace

TEST_CASE("slow losses hand example") {
  const Tensor x({2, 1}, {1, 1});
  const Tensor g({2, 1}, {0.5, 0.7});
  const std::vector<MaskPlan> plans = {plan_from(x, {1, 0})};
  Tape tape;
  const SlowLossReport r = slow_losses(tape.constant(g), x, plans, 0.5).report();
  CHECK(std::abs(r.loss_masked - 0.25) < 1e-12);
  CHECK(std::abs(r.loss_unmasked - 0.09) < 1e-12);
  CHECK(std::abs(r.loss_total - 0.17) < 1e-12);
}

TEST_CASE("slow loss identities") {
  Rng rng(4);
  const Tensor x = random_tensor({3, 10, 2}, rng), g = random_tensor({3, 10, 2}, rng);
  const Tensor scores = random_tensor({3, 10}, rng);
  const std::vector<MaskPlan> plans = select_masks(x, scores, 0.3, 0.5, rng);
  Tape tape;
  SUBCASE("perfect reconstruction") {
    const SlowLossReport r = slow_losses(tape.constant(x), x, plans, 0.4).report();
    CHECK(r.loss_masked == 0.0);
    CHECK(r.loss_unmasked == 0.0);
    CHECK(r.loss_total == 0.0);
  }
  SUBCASE("lambda endpoints and the convex combination") {
    const SlowLossReport one = slow_losses(tape.constant(g), x, plans, 1.0).report();
    const SlowLossReport zero = slow_losses(tape.constant(g), x, plans, 0.0).report();
    CHECK(one.loss_total == one.loss_masked);
    CHECK(zero.loss_total == zero.loss_unmasked);
    for (double lambda : {0.1, 0.5, 0.77}) {
      const SlowLossReport r = slow_losses(tape.constant(g), x, plans, lambda).report();
      CHECK(std::abs(r.loss_total - (lambda * r.loss_masked + (1 - lambda) * r.loss_unmasked)) < 1e-12);
    }
  }
  SUBCASE("endpoint gradients vanish on the ignored positions") {
    for (double lambda : {0.0, 1.0}) {
      Tape t;
      Var gv = t.variable(g);
      t.backward(slow_losses(gv, x, plans, lambda).total);
      const Tensor grad = t.grad(gv);
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t s = 0; s < 10; ++s) {
          const bool masked = plans[n].mask[s] != 0;
          const bool ignored = lambda == 0.0 ? masked : !masked;
          for (std::size_t c = 0; c < 2; ++c) {
            if (ignored) CHECK(grad.at(n, s, c) == 0.0);
          }
        }
      }
    }
  }
  SUBCASE("independent oracle of the per-window averages") {
    const SlowLossReport r = slow_losses(tape.constant(g), x, plans, 0.5).report();
    double lm = 0.0, lum = 0.0;
    for (std::size_t n = 0; n < 3; ++n) {
      double sm = 0.0, su = 0.0;
      std::size_t m = 0;
      for (std::size_t s = 0; s < 10; ++s) {
        double e = 0.0;
        for (std::size_t c = 0; c < 2; ++c) e += std::pow(g.at(n, s, c) - x.at(n, s, c), 2);
        if (plans[n].mask[s]) {
          sm += e;
          ++m;
        } else {
          su += e;
        }
      }
      lm += sm / (2.0 * static_cast<double>(m)) / 3.0;
      lum += su / (2.0 * static_cast<double>(10 - m)) / 3.0;
    }
    CHECK(std::abs(r.loss_masked - lm) < 1e-12);
    CHECK(std::abs(r.loss_unmasked - lum) < 1e-12);
  }
  SUBCASE("joint permutation of timesteps leaves the losses unchanged") {
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor xp({1, 10, 2}), gp({1, 10, 2}), x0({1, 10, 2}), g0({1, 10, 2});
    std::vector<std::uint8_t> mp(10);
    for (std::size_t s = 0; s < 10; ++s) {
      mp[s] = plans[0].mask[perm[s]];
      for (std::size_t c = 0; c < 2; ++c) {
        xp.at(0, s, c) = x.at(0, perm[s], c);
        gp.at(0, s, c) = g.at(0, perm[s], c);
        x0.at(0, s, c) = x.at(0, s, c);
        g0.at(0, s, c) = g.at(0, s, c);
      }
    }
    const Tensor xp2 = xp.reshaped({10, 2});
    const std::vector<MaskPlan> permuted = {plan_from(xp2, mp)};
    const std::vector<MaskPlan> original = {plans[0]};
    const double a = slow_losses(tape.constant(g0), x0, original, 0.3).report().loss_total;
    const double b = slow_losses(tape.constant(gp), xp, permuted, 0.3).report().loss_total;
    CHECK(a == doctest::Approx(b).epsilon(1e-13));
  }
}

TEST_CASE("mask selection") {
  Rng rng(8);
  SUBCASE("no randomization takes the top steps") {
    const Tensor x = random_tensor({10, 1}, rng);
    std::vector<double> scores(10);
    for (std::size_t t = 0; t < 10; ++t) scores[t] = 10.0 - static_cast<double>(t);
    const MaskPlan p = select_mask(x, scores, 0.2, 0.0, rng);
    CHECK(masked_set(p) == std::set<std::size_t>{0, 1});
  }
  SUBCASE("full randomization is uniform over steps") {
    const Tensor x = random_tensor({10, 1}, rng);
    std::vector<double> scores(10);
    for (std::size_t t = 0; t < 10; ++t) scores[t] = static_cast<double>(t);
    std::vector<double> freq(10, 0.0);
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
      const MaskPlan p = select_mask(x, scores, 0.3, 1.0, rng);
      CHECK(p.masked_count() == 3);
      for (std::size_t t : masked_set(p)) freq[t] += 1.0 / draws;
    }
    // each step masked with probability 0.3; binomial sd ~ 0.0032
    for (double f : freq) CHECK(std::abs(f - 0.3) < 0.02);
  }
  SUBCASE("randomization changes the mask often enough") {
    const Tensor x = random_tensor({20, 1}, rng);
    const std::vector<double> scores = [&] {
      std::vector<double> s(20);
      for (double& v : s) v = rng.uniform();
      return s;
    }();
    const std::set<std::size_t> top = masked_set(select_mask(x, scores, 0.15, 0.0, rng));
    int differ = 0;
    for (int i = 0; i < 1000; ++i) differ += masked_set(select_mask(x, scores, 0.15, 0.3, rng)) != top;
    CHECK(differ >= 200);
  }
  SUBCASE("fuzzed plans keep both denominators positive") {
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t T = 2 + rng.index(60), D = 1 + rng.index(3);
      const double rho = rng.uniform(0.01, 0.99), eps = rng.uniform();
      const Tensor x = random_tensor({T, D}, rng);
      std::vector<double> scores(T);
      for (double& v : scores) v = rng.index(3);  // plenty of ties
      const auto expected = static_cast<std::size_t>(std::llround(rho * static_cast<double>(T)));
      if (expected == 0 || expected >= T) {
        CHECK_THROWS_AS(select_mask(x, scores, rho, eps, rng), ConfigError);
        continue;
      }
      const MaskPlan p = select_mask(x, scores, rho, eps, rng);
      CHECK(p.masked_count() == expected);
      CHECK(p.masked_count() >= 1);
      CHECK(p.masked_count() <= T - 1);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < D; ++c) {
          CHECK(p.masked_input.at(t, c) == (p.mask[t] ? 0.0 : x.at(t, c)));
        }
      }
    }
  }
  SUBCASE("invalid rates") {
    const Tensor x = random_tensor({10, 1}, rng);
    const std::vector<double> scores(10, 1.0);
    CHECK_THROWS_AS(select_mask(x, scores, 0.0, 0.1, rng), ConfigError);
    CHECK_THROWS_AS(select_mask(x, scores, 1.0, 0.1, rng), ConfigError);
    CHECK_THROWS_AS(select_mask(x, scores, 0.3, 1.5, rng), ConfigError);
    CHECK_THROWS_AS(mask_count(10, 0.01), ConfigError);
    CHECK_THROWS_AS(mask_count(10, 0.97), ConfigError);
  }
}

TEST_CASE("slow reconstruction") {
  Rng rng(21);
  BackboneConfig cfg = tiny_backbone(2, 2);
  cfg.head = HeadKind::None;
  Backbone g("slow", cfg, 5);
  SUBCASE("shape") {
    Tape tape;
    CHECK(slow_reconstruct(g, tape, random_tensor({3, 8, 2}, rng), {}).shape() == Shape{3, 8, 2});
  }
  SUBCASE("gradient of the combined loss") {
    const Tensor x = random_tensor({2, 8, 2}, rng);
    const std::vector<MaskPlan> plans = select_masks(x, g.importance(x), 0.25, 0.3, rng);
    const Tensor masked = stack_masked(plans);
    const std::vector<Parameter*> params = g.parameters();
    const double err = grad_check_params(
        [&](Tape& t) { return slow_losses(slow_reconstruct(g, t, masked, {}), x, plans, 0.5).total; }, params, 1e-5,
        4, &rng);
    CHECK(err < 1e-4);
  }
  SUBCASE("training on a masked constant series lowers the loss") {
    const Tensor x({1, 8, 2}, 0.8);
    Adam opt(g.parameters(), 1e-2);
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
      const std::vector<MaskPlan> plans = select_masks(x, g.importance(x), 0.25, 0.3, rng);
      const Tensor masked = stack_masked(plans);
      opt.zero_grad();
      Tape tape;
      Var loss = slow_losses(slow_reconstruct(g, tape, masked, {}), x, plans, 0.5).total;
      losses.push_back(loss.value().item());
      tape.backward(loss);
      opt.step();
    }
    const double first = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10;
    const double last = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10;
    CHECK(last < first);
  }
}
