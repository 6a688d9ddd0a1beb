#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"
#include "mantra/urt.hpp"
#include "test_util.hpp"

using namespace mantra;
using mantra::testing::random_tensor;

namespace {

std::vector<Var> constants(Tape& tape, const std::vector<Tensor>& ts) {
  std::vector<Var> out;
  for (const Tensor& t : ts) out.push_back(tape.constant(t));
  return out;
}

void zero_layer(UrtLayer& layer) {
  for (Parameter* p : layer.parameters()) p->value.fill(0.0);
}

}  // namespace

TEST_CASE("universal representation") {
  Tape tape;
  SUBCASE("hand toy: two samples, two learners, one step") {
    const Tensor a({2, 1, 1}, {1.0, 3.0}), b({2, 1, 1}, {-2.0, 6.0});
    const std::vector<Var> preds = constants(tape, {a, b});
    const UniversalRepresentation u = universal_representation(preds);
    CHECK(u.concat.shape() == Shape{2, 2});
    CHECK(u.concat.value().at(0, 0) == 1.0);
    CHECK(u.concat.value().at(0, 1) == -2.0);
    CHECK(u.concat.value().at(1, 0) == 3.0);
    CHECK(u.concat.value().at(1, 1) == 6.0);
    CHECK(u.mean.value().at(0, 0) == 2.0);
    CHECK(u.mean.value().at(0, 1) == 2.0);
  }
  SUBCASE("single sample and sign symmetry") {
    Rng rng(1);
    const Tensor p = random_tensor({1, 3, 2}, rng);
    Tensor neg = p;
    for (double& v : neg.data()) v = -v;
    const UniversalRepresentation u = universal_representation(constants(tape, {p, neg}));
    for (std::size_t i = 0; i < 12; ++i) CHECK(u.mean.value()[i] == u.concat.value()[i]);
    for (std::size_t i = 0; i < 6; ++i) CHECK(u.mean.value()[i] == -u.mean.value()[i + 6]);
  }
  SUBCASE("empty") { CHECK_THROWS(universal_representation(std::vector<Var>{})); }
}

TEST_CASE("attention scores") {
  Tape tape;
  SUBCASE("single learner") {
    UrtLayer layer("u", UrtConfig{}, 1, 2, 3);
    Rng rng(2);
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = rng.normal();
    }
    const AttentionRecord r = layer.attention_scores(tape, constants(tape, {random_tensor({4, 2, 1}, rng)}));
    CHECK(r.alpha.value().at(0, 0) == 1.0);
  }
  SUBCASE("equal batch means give equal weights") {
    UrtLayer layer("u", UrtConfig{}, 2, 2, 3);
    Rng rng(3);
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = rng.normal();
    }
    const Tensor a({2, 2, 1}, {1, 2, 3, 4}), b({2, 2, 1}, {3, 4, 1, 2});
    const AttentionRecord r = layer.attention_scores(tape, constants(tape, {a, b}));
    CHECK(r.alpha.value().at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.alpha.value().at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("hand example with l = 4") {
    UrtLayer layer("u", UrtConfig{1, 4, false, 0.1}, 2, 1, 3);
    zero_layer(layer);
    UrtHead& h = layer.heads()[0];
    h.query.bias.value.data()[0] = 1.0;  // q = [1, 0, 0, 0]
    h.key.weight.value.at(0, 0) = 1.0;   // k_i = [mean f_i, 0, 0, 0]
    const Tensor f1({1, 1, 1}, {2.0}), f2({1, 1, 1}, {0.0});
    const AttentionRecord r = layer.attention_scores(tape, constants(tape, {f1, f2}));
    CHECK(std::abs(r.beta.value().at(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(r.beta.value().at(0, 1) - 0.0) < 1e-12);
    const double e = std::exp(1.0);
    CHECK(std::abs(r.alpha.value().at(0, 0) - e / (e + 1)) < 1e-12);
    CHECK(std::abs(r.alpha.value().at(0, 1) - 1 / (e + 1)) < 1e-12);
  }
  SUBCASE("scaling the scores keeps the argmax") {
    Rng rng(5);
    UrtLayer layer("u", UrtConfig{}, 4, 3, 3);
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = rng.normal();
    }
    std::vector<Tensor> preds;
    for (int i = 0; i < 4; ++i) preds.push_back(random_tensor({5, 3, 1}, rng));
    auto argmax = [&] {
      Tape t;
      const Tensor a = layer.attention_scores(t, constants(t, preds)).alpha.value();
      return std::max_element(a.data().begin(), a.data().end()) - a.data().begin();
    };
    const auto before = argmax();
    Tape t0;
    const Tensor beta0 = layer.attention_scores(t0, constants(t0, preds)).beta.value();
    for (Parameter* p : layer.parameters()) {
      if (p->name.find("query") != std::string::npos) {
        for (double& v : p->value.data()) v *= 3.7;
      }
    }
    CHECK(argmax() == before);
    Tape t1;
    const Tensor beta1 = layer.attention_scores(t1, constants(t1, preds)).beta.value();
    for (std::size_t i = 0; i < beta0.size(); ++i) CHECK(beta1[i] == doctest::Approx(3.7 * beta0[i]).epsilon(1e-12));
  }
}

TEST_CASE("urt forward") {
  Rng rng(9);
  Tape tape;
  std::vector<Tensor> preds;
  for (int i = 0; i < 3; ++i) preds.push_back(random_tensor({4, 5, 1}, rng));

  SUBCASE("one-hot attention picks one learner") {
    UrtLayer layer("u", UrtConfig{1, 2, false, 0.1}, 3, 5, 1);
    zero_layer(layer);
    UrtHead& h = layer.heads()[0];
    h.query.bias.value.data()[0] = 1.0;
    // keys: learner 0's batch mean pushed far up via a bias-free projection
    // of a learner-specific offset
    std::vector<Tensor> shifted = preds;
    for (double& v : shifted[0].data()) v += 1e3;
    h.key.weight.value.fill(1.0);
    const UrtOutput out = layer(tape, constants(tape, shifted));
    CHECK(out.attention.alpha.value().at(0, 0) == 1.0);
    for (std::size_t i = 0; i < shifted[0].size(); ++i) CHECK(out.prediction.value()[i] == shifted[0][i]);
  }
  SUBCASE("single head without a final map stays inside the learner envelope") {
    for (int trial = 0; trial < 20; ++trial) {
      UrtLayer layer("u", UrtConfig{1, 4, false, 0.1}, 3, 5, 100 + trial);
      for (Parameter* p : layer.parameters()) {
        for (double& v : p->value.data()) v = rng.normal();
      }
      const UrtOutput out = layer(tape, constants(tape, preds));
      const Tensor a = out.attention.alpha.value();
      CHECK(std::abs(a[0] + a[1] + a[2] - 1.0) < 1e-12);
      for (std::size_t i = 0; i < preds[0].size(); ++i) {
        const double lo = std::min({preds[0][i], preds[1][i], preds[2][i]});
        const double hi = std::max({preds[0][i], preds[1][i], preds[2][i]});
        CHECK(out.prediction.value()[i] >= lo - 1e-12);
        CHECK(out.prediction.value()[i] <= hi + 1e-12);
      }
    }
  }
  SUBCASE("two heads with final maps match hand arithmetic") {
    UrtLayer layer("u", UrtConfig{2, 1, true, 0.1}, 2, 1, 4);
    CHECK(layer.has_final_map());
    zero_layer(layer);
    // head 0: beta_i = mean(f_i); head 1: uniform
    layer.heads()[0].query.bias.value.data()[0] = 1.0;
    layer.heads()[0].key.weight.value.data()[0] = 1.0;
    layer.heads()[0].final.weight.value.data()[0] = 2.0;
    layer.heads()[0].final.bias.value.data()[0] = 1.0;
    layer.heads()[1].final.weight.value.data()[0] = -1.0;
    layer.heads()[1].final.bias.value.data()[0] = 0.5;
    const Tensor f1({2, 1, 1}, {1.0, 3.0}), f2({2, 1, 1}, {0.0, -2.0});  // means 2 and -1
    const UrtOutput out = layer(tape, constants(tape, {f1, f2}));
    const double a0 = std::exp(2.0) / (std::exp(2.0) + std::exp(-1.0)), a1 = 1 - a0;
    for (std::size_t n = 0; n < 2; ++n) {
      const double head0 = 2.0 * (a0 * f1[n] + a1 * f2[n]) + 1.0;
      const double head1 = -1.0 * (0.5 * f1[n] + 0.5 * f2[n]) + 0.5;
      CHECK(std::abs(out.prediction.value()[n] - (head0 + head1)) < 1e-12);
    }
  }
  SUBCASE("permuting learners together with their query blocks") {
    UrtLayer layer("u", UrtConfig{1, 4, false, 0.1}, 3, 5, 6);
    for (Parameter* p : layer.parameters()) {
      for (double& v : p->value.data()) v = rng.normal();
    }
    const Tensor before = layer(tape, constants(tape, preds)).prediction.value();
    const std::size_t perm[3] = {2, 0, 1};
    Tensor& wq = layer.heads()[0].query.weight.value;  // [M * P, l]
    const Tensor old = wq;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 4; ++c) wq.at(i * 5 + r, c) = old.at(perm[i] * 5 + r, c);
      }
    }
    const std::vector<Tensor> permuted = {preds[perm[0]], preds[perm[1]], preds[perm[2]]};
    Tape fresh;
    const Tensor after = layer(fresh, constants(fresh, permuted)).prediction.value();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-12));
  }
  SUBCASE("single head starts as the mean of the learners") {
    UrtLayer layer("u", UrtConfig{}, 3, 5, 7);
    const UrtOutput out = layer(tape, constants(tape, preds));
    for (std::size_t i = 0; i < preds[0].size(); ++i) {
      CHECK(out.prediction.value()[i] == doctest::Approx((preds[0][i] + preds[1][i] + preds[2][i]) / 3).epsilon(1e-12));
    }
  }
}

TEST_CASE("orthogonality regularizer") {
  Tape tape;
  SUBCASE("two duplicated heads at one half") {
    const double omega = urt_regularizer(tape.constant(Tensor({2, 2}, {0.5, 0.5, 0.5, 0.5}))).value().item();
    CHECK(omega == 1.0);
  }
  SUBCASE("orthonormal rows") {
    CHECK(urt_regularizer(tape.constant(Tensor({2, 3}, {1, 0, 0, 0, 0, 1}))).value().item() == 0.0);
  }
  SUBCASE("single head expansion") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor a({1, 4});
      double total = 0.0;
      for (double& v : a.data()) total += (v = rng.uniform());
      double sq = 0.0;
      for (double& v : a.data()) sq += (v /= total) * v;
      const double omega = urt_regularizer(tape.constant(a)).value().item();
      CHECK(std::abs(omega - (sq - 1) * (sq - 1)) < 1e-14);
      CHECK(omega > 0.0);
    }
    CHECK(urt_regularizer(tape.constant(Tensor({1, 3}, {0, 1, 0}))).value().item() == 0.0);
  }
}

TEST_CASE("urt config and dump") {
  CHECK_THROWS_AS(validate(UrtConfig{0, 8, false, 0.1}), ConfigError);
  CHECK_THROWS_AS(validate(UrtConfig{1, 0, false, 0.1}), ConfigError);
  CHECK(validate(UrtConfig{2, 8, false, 0.1}).size() == 1);
  CHECK(UrtLayer("u", UrtConfig{2, 8, false, 0.1}, 3, 24, 1).has_final_map());
  CHECK(UrtLayer("u", UrtConfig{}, 3, 24, 1).parameter_count() == 784);
  CHECK(UrtLayer("u", UrtConfig{1, 8, true, 0.1}, 3, 24, 1).parameter_count() == 1384);
  std::ostringstream os;
  dump_attention(os, Tensor({2, 2}, {0.25, 0.75, 0.5, 0.5}));
  CHECK(os.str() == "0,0,0.25\n0,1,0.75\n1,0,0.5\n1,1,0.5\n");
}
