#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mantra/autocorrelation.hpp"
#include "mantra/errors.hpp"
#include "mantra/gradcheck.hpp"
#include "mantra/ops.hpp"
#include "mantra/rng.hpp"

using namespace mantra;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
  return t;
}

// Brute-force circular correlation, scores indexed by tau mod L.
std::vector<double> brute_scores(const Tensor& q, const Tensor& k) {
  const std::size_t L = q.dim(0), d = q.dim(1);
  std::vector<double> r(L, 0.0);
  for (std::size_t tau = 0; tau < L; ++tau) {
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < d; ++c) r[tau] += q.at((t + tau) % L, c) * k.at(t, c);
    r[tau] /= static_cast<double>(d);
  }
  return r;
}

// Direct O(L^2 k) block: rank delays 1..L by score, softmax, aggregate rolls.
Tensor brute_block(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t top) {
  const std::size_t L = q.dim(0), d = q.dim(1);
  const std::vector<double> r = brute_scores(q, k);
  std::vector<std::size_t> order(L);
  for (std::size_t i = 0; i < L; ++i) order[i] = i + 1;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r[a % L] > r[b % L]; });
  double mx = r[order[0] % L], z = 0.0;
  std::vector<double> w(top);
  for (std::size_t i = 0; i < top; ++i) z += w[i] = std::exp(r[order[i] % L] - mx);
  Tensor out({L, d});
  for (std::size_t i = 0; i < top; ++i)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < d; ++c) out.at(t, c) += w[i] / z * v.at((t + order[i]) % L, c);
  return out;
}

Tensor sinusoid(std::size_t L, std::size_t period) {
  Tensor x({L, 1});
  for (std::size_t t = 0; t < L; ++t) x[t] = std::sin(2 * std::numbers::pi * static_cast<double>(t) / period);
  return x;
}

}  // namespace

TEST_CASE("scores of a period-8 sinusoid peak at 8 and 16") {
  const Tensor x = sinusoid(16, 8);
  const std::vector<double> r = autocorrelation_scores(x, x, CorrelationPath::Direct);
  const DelaySet top = top_k_delays(r, 16, 0.5);  // floor(0.5 ln 16) = 1
  CHECK(top.delays == std::vector<std::size_t>{8});
  CHECK(std::abs(r[8] - r[0]) < 1e-12);
  for (std::size_t tau = 1; tau < 16; ++tau) {
    if (tau != 8) CHECK(r[tau] < r[8] - 1e-9);
  }
  const DelaySet two = top_k_delays(r, 16, 1.0);  // floor(ln 16) = 2
  std::vector<std::size_t> delays = two.delays;
  std::sort(delays.begin(), delays.end());
  CHECK(delays == std::vector<std::size_t>{8, 16});
  CHECK(two.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("constant series score equally at every lag") {
  const Tensor x({12, 2}, 1.5);
  const std::vector<double> r = autocorrelation_scores(x, x);
  for (double v : r) CHECK(v == doctest::Approx(r[0]).epsilon(1e-14));
}

TEST_CASE("FFT and direct paths agree with brute force") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 2 + rng.index(63), d = 1 + rng.index(4);
    const Tensor q = random_tensor({L, d}, rng), k = random_tensor({L, d}, rng);
    const auto fft = autocorrelation_scores(q, k, CorrelationPath::Fft);
    const auto direct = autocorrelation_scores(q, k, CorrelationPath::Direct);
    const auto brute = brute_scores(q, k);
    for (std::size_t i = 0; i < L; ++i) {
      CHECK(std::abs(fft[i] - brute[i]) < 1e-9);
      CHECK(std::abs(direct[i] - brute[i]) < 1e-12);
    }
  }
}

TEST_CASE("scores are symmetric under swapping q and k with lag reversal") {
  Rng rng(8);
  const Tensor q = random_tensor({20, 3}, rng), k = random_tensor({20, 3}, rng);
  const auto a = autocorrelation_scores(q, k), b = autocorrelation_scores(k, q);
  for (std::size_t tau = 0; tau < 20; ++tau) CHECK(std::abs(a[tau] - b[(20 - tau) % 20]) < 1e-12);
}

TEST_CASE("top-k rule") {
  CHECK(top_k_count(96, 2.0) == 9);
  CHECK(top_k_count(2, 1.0) == 1);
  CHECK(top_k_count(4, 3.0) == 4);
  std::vector<double> r(10, 0.0);
  r[5] = 3.0;
  const DelaySet one = top_k_delays(r, 10, 0.1);
  CHECK(one.delays == std::vector<std::size_t>{5});
  CHECK(one.weights[0] == 1.0);
  r[7] = 3.0;
  const DelaySet two = top_k_delays(r, 10, 0.9);  // floor(0.9 ln 10) = 2
  CHECK(two.delays == std::vector<std::size_t>{5, 7});
  CHECK(two.weights[0] == 0.5);
  CHECK(two.weights[1] == 0.5);
}

TEST_CASE("delay weights lie on the simplex") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 2 + rng.index(100);
    std::vector<double> r(L);
    for (double& v : r) v = rng.uniform(-20, 20);
    const DelaySet s = top_k_delays(r, L, rng.uniform(1, 3));
    double total = 0.0;
    for (double w : s.weights) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    std::vector<std::size_t> d = s.delays;
    std::sort(d.begin(), d.end());
    CHECK(std::adjacent_find(d.begin(), d.end()) == d.end());
    CHECK(d.front() >= 1);
    CHECK(d.back() <= L);
  }
}

TEST_CASE("block matches the direct O(L^2 k) computation") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 2 + rng.index(63), d = 1 + rng.index(3);
    const double c = rng.uniform(0.3, 2.0);
    if (top_k_count(L, c) > 8) continue;
    const Tensor q = random_tensor({L, d}, rng), k = random_tensor({L, d}, rng), v = random_tensor({L, d}, rng);
    const Tensor expect = brute_block(q, k, v, top_k_count(L, c));
    Tape tape;
    const Tensor got = autocorrelation_block(tape.constant(q), tape.constant(k), tape.constant(v), 1, c,
                                             CorrelationPath::Fft)
                           .value();
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-6);
  }
}

TEST_CASE("block identities") {
  Tape tape;
  SUBCASE("single delay L returns v") {
    Tensor q({6, 1}, 0.0);
    Rng rng(1);
    const Tensor v = random_tensor({6, 2}, rng);
    Tensor qq({6, 2}, 1.0);
    std::vector<DelaySet> sets;
    // Constant q/k tie everywhere; ties break toward the smaller delay, so
    // force delay L by making lag 0 dominant.
    Tensor k({6, 2}, 0.0);
    k.at(0, 0) = 1.0;
    qq.fill(0.0);
    qq.at(0, 0) = 1.0;
    const Tensor out =
        autocorrelation_block(tape.constant(qq), tape.constant(k), tape.constant(v), 1, 0.1, CorrelationPath::Direct, &sets)
            .value();
    CHECK(sets[0].delays == std::vector<std::size_t>{6});
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]));
  }
  SUBCASE("constant v is invariant") {
    Rng rng(4);
    const Tensor q = random_tensor({10, 2}, rng);
    const Tensor out =
        autocorrelation_block(tape.constant(q), tape.constant(q), tape.constant(Tensor({10, 2}, 3.0)), 1, 2.0).value();
    for (double v : out.data()) CHECK(v == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("period-8 sinusoid is reproduced") {
    const Tensor x = sinusoid(16, 8);
    std::vector<DelaySet> sets;
    const Tensor out =
        autocorrelation_block(tape.constant(x), tape.constant(x), tape.constant(x), 1, 1.0, CorrelationPath::Fft, &sets)
            .value();
    std::vector<std::size_t> d = sets[0].delays;
    std::sort(d.begin(), d.end());
    CHECK(d == std::vector<std::size_t>{8, 16});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(out[i] - x[i]) < 1e-6);
  }
}

TEST_CASE("block gradients match finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor q0 = random_tensor({2, 9, 4}, rng), k0 = random_tensor({2, 9, 4}, rng),
                 v0 = random_tensor({2, 9, 4}, rng);
    const Tensor w = random_tensor({2, 9, 4}, rng);
    for (int which = 0; which < 3; ++which) {
      const double err = grad_check(
          [&](Tape& t, Var x) {
            Var q = which == 0 ? x : t.constant(q0);
            Var k = which == 1 ? x : t.constant(k0);
            Var v = which == 2 ? x : t.constant(v0);
            return sum(autocorrelation_block(q, k, v, 2, 1.0, CorrelationPath::Direct) * t.constant(w));
          },
          which == 0 ? q0 : which == 1 ? k0 : v0);
      // Finite differences are only meaningful away from delay-set switches;
      // with continuous random inputs that is almost sure at h = 1e-5.
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("multi-head wrapper") {
  Rng rng(23);
  AutoCorrConfig cfg{1.0, 2, 8};
  MultiHeadAutoCorrelation mh("ac", cfg, CorrelationPath::Auto, rng);
  const Tensor xq = random_tensor({3, 10, 8}, rng), xk = random_tensor({3, 14, 8}, rng);
  SUBCASE("shape contract with cross lengths") {
    Tape tape;
    CHECK(mh(tape, tape.constant(xq), tape.constant(xk), tape.constant(xk)).shape() == xq.shape());
  }
  SUBCASE("identity projections with a single delay L pass values through") {
    AutoCorrConfig one{0.1, 1, 4};
    MultiHeadAutoCorrelation id("id", one, CorrelationPath::Direct, rng);
    for (Linear* lin : {&id.query(), &id.key(), &id.value(), &id.output()}) {
      lin->weight.value.fill(0.0);
      for (std::size_t i = 0; i < 4; ++i) lin->weight.value.at(i, i) = 1.0;
      lin->bias.value.fill(0.0);
    }
    Tensor x({6, 4}, 0.0);
    x.at(0, 0) = 5.0;  // lag 0 dominates
    Tensor v = random_tensor({6, 4}, rng);
    Tape tape;
    const Tensor out = id(tape, tape.constant(x), tape.constant(x), tape.constant(v)).value();
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]));
  }
  SUBCASE("projection gradients") {
    std::vector<Parameter*> params;
    mh.collect(params);
    const Tensor w = random_tensor({3, 10, 8}, rng);
    const double err = grad_check_params(
        [&](Tape& t) { return sum(mh(t, t.constant(xq), t.constant(xk), t.constant(xk)) * t.constant(w)); }, params);
    CHECK(err < 1e-4);
  }
  SUBCASE("importance is nonnegative mass on the selected delays") {
    const Tensor imp = mh.self_importance(xq);
    CHECK(imp.shape() == Shape{3, 10});
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(validate(AutoCorrConfig{1.0, 3, 8}), ConfigError);
    CHECK(validate(AutoCorrConfig{4.0, 1, 8}).size() == 1);
    CHECK(validate(AutoCorrConfig{2.0, 1, 8}).empty());
  }
}
