#include "mantra/autocorrelation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"

namespace mantra {

namespace {

using Complex = std::complex<double>;

// Channels [offset, offset + channels) of one series, rows `stride` apart.
// (t + tau) mod L for t < L and tau <= L.
inline std::size_t wrap(std::size_t t, std::size_t tau, std::size_t L) {
  const std::size_t s = t + tau;
  return s >= L ? s - L : s;
}

struct Lane {
  const double* base;
  std::size_t stride;
  std::size_t channels;

  double at(std::size_t t, std::size_t c) const { return base[t * stride + c]; }
};

void fft_inplace(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const Complex step(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const Complex u = a[i + j];
        const Complex v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= step;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (Complex& x : a) x *= inv;
  }
}

void scores_direct(const Lane& q, const Lane& k, std::size_t L, double* out) {
  const double inv = 1.0 / static_cast<double>(q.channels);
  for (std::size_t tau = 0; tau < L; ++tau) {
    double acc = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t s = wrap(t, tau, L);
      for (std::size_t c = 0; c < q.channels; ++c) acc += q.at(s, c) * k.at(t, c);
    }
    out[tau] = acc * inv;
  }
}

// Linear cross-correlation through a zero-padded power-of-two FFT, folded
// back onto the circle: R[tau] = lin[tau] + lin[tau - L]. The two real
// channels are packed into one complex transform.
void scores_fft(const Lane& q, const Lane& k, std::size_t L, double* out) {
  std::size_t n = 1;
  while (n < 2 * L) n <<= 1;
  std::vector<Complex> z(n), spectrum(n, Complex(0.0, 0.0));
  for (std::size_t c = 0; c < q.channels; ++c) {
    std::fill(z.begin(), z.end(), Complex(0.0, 0.0));
    for (std::size_t t = 0; t < L; ++t) z[t] = Complex(q.at(t, c), k.at(t, c));
    fft_inplace(z, false);
    for (std::size_t f = 0; f < n; ++f) {
      const Complex zc = std::conj(z[(n - f) % n]);
      const Complex qf = 0.5 * (z[f] + zc);
      const Complex kf = Complex(0.0, -0.5) * (z[f] - zc);
      spectrum[f] += qf * std::conj(kf);
    }
  }
  fft_inplace(spectrum, true);
  const double inv = 1.0 / static_cast<double>(q.channels);
  for (std::size_t tau = 0; tau < L; ++tau) {
    out[tau] = (spectrum[tau].real() + spectrum[(n + tau - L) % n].real()) * inv;
  }
}

void lane_scores(const Lane& q, const Lane& k, std::size_t L, CorrelationPath path, double* out) {
  const bool use_fft = path == CorrelationPath::Fft || (path == CorrelationPath::Auto && L >= kFftMinLength);
  if (use_fft) {
    scores_fft(q, k, L, out);
  } else {
    scores_direct(q, k, L, out);
  }
}

struct Geometry {
  std::size_t batch;
  std::size_t length;
  std::size_t width;
  std::size_t heads;
  std::size_t head_width;
};

Geometry geometry(const Shape& s, std::size_t heads, const char* what) {
  if (s.size() != 2 && s.size() != 3) throw ShapeError(std::string(what) + ": expected [L, d] or [N, L, d]");
  Geometry g{s.size() == 3 ? s[0] : 1, s[s.size() - 2], s.back(), heads, 0};
  if (heads == 0 || g.width % heads != 0) {
    throw ShapeError(std::string(what) + ": width " + std::to_string(g.width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  g.head_width = g.width / heads;
  return g;
}

Lane lane_of(const Tensor& t, const Geometry& g, std::size_t n, std::size_t h) {
  return Lane{t.data().data() + n * g.length * g.width + h * g.head_width, g.width, g.head_width};
}

}  // namespace

std::vector<std::string> validate(const AutoCorrConfig& cfg) {
  if (cfg.heads == 0 || cfg.d_model == 0) throw ConfigError("auto-correlation needs positive heads and d_model");
  if (cfg.d_model % cfg.heads != 0) {
    throw ConfigError("d_model " + std::to_string(cfg.d_model) + " is not divisible by heads " +
                      std::to_string(cfg.heads));
  }
  if (!(cfg.c > 0.0)) throw ConfigError("auto-correlation factor c must be positive");
  std::vector<std::string> warnings;
  if (cfg.c < 1.0 || cfg.c > 3.0) {
    warnings.push_back("auto-correlation factor c=" + std::to_string(cfg.c) + " lies outside the usual range [1, 3]");
  }
  return warnings;
}

std::vector<double> autocorrelation_scores(const Tensor& q, const Tensor& k, CorrelationPath path) {
  if (q.shape() != k.shape() || q.rank() != 2) {
    throw ShapeError("autocorrelation_scores: expected equal [L, d] shapes, got " + shape_string(q.shape()) + " and " +
                     shape_string(k.shape()));
  }
  const std::size_t L = q.dim(0), d = q.dim(1);
  std::vector<double> out(L);
  lane_scores(Lane{q.data().data(), d, d}, Lane{k.data().data(), d, d}, L, path, out.data());
  return out;
}

std::size_t top_k_count(std::size_t length, double c) {
  const double raw = std::floor(c * std::log(static_cast<double>(length)));
  const std::size_t k = raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
  return std::min(k, length);
}

DelaySet top_k_delays(std::span<const double> scores, std::size_t length, double c) {
  if (length < 1 || scores.size() != length) throw std::invalid_argument("top_k_delays: scores must have length L");
  const std::size_t k = top_k_count(length, c);
  // Candidate delays 1..L; delay L reads score index 0.
  std::vector<std::size_t> delays(length);
  std::iota(delays.begin(), delays.end(), std::size_t{1});
  auto score = [&](std::size_t tau) { return scores[tau % length]; };
  std::partial_sort(delays.begin(), delays.begin() + static_cast<std::ptrdiff_t>(k), delays.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = score(a), sb = score(b);
                      return sa > sb || (sa == sb && a < b);
                    });
  delays.resize(k);
  DelaySet out{delays, std::vector<double>(k)};
  double mx = score(delays[0]);
  for (std::size_t tau : delays) mx = std::max(mx, score(tau));
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out.weights[i] = std::exp(score(delays[i]) - mx);
    z += out.weights[i];
  }
  for (double& w : out.weights) w /= z;
  return out;
}

Var autocorrelation_block(Var q, Var k, Var v, std::size_t heads, double c, CorrelationPath path,
                          std::vector<DelaySet>* delays_out) {
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("autocorrelation_block: q/k/v shapes differ: " + shape_string(q.shape()) + ", " +
                     shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const Geometry g = geometry(q.shape(), heads, "autocorrelation_block");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t L = g.length;

  std::vector<DelaySet> sets;
  sets.reserve(g.batch * g.heads);
  std::vector<double> scores(L);
  Tensor out(qv.shape());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      lane_scores(lane_of(qv, g, n, h), lane_of(kv, g, n, h), L, path, scores.data());
      DelaySet set = top_k_delays(scores, L, c);
      const std::size_t base = n * L * g.width + h * g.head_width;
      for (std::size_t i = 0; i < set.delays.size(); ++i) {
        const std::size_t tau = set.delays[i];
        const double w = set.weights[i];
        for (std::size_t t = 0; t < L; ++t) {
          const double* src = vv.data().data() + base + wrap(t, tau, L) * g.width;
          double* dst = out.data().data() + base + t * g.width;
          for (std::size_t ch = 0; ch < g.head_width; ++ch) dst[ch] += w * src[ch];
        }
      }
      sets.push_back(std::move(set));
    }
  }
  if (delays_out != nullptr) *delays_out = sets;

  return q.tape().record(
      std::move(out), {q, k, v},
      [iq = q.id(), ik = k.id(), iv = v.id(), g, sets = std::move(sets)](Tape& t, const Tensor&, const Tensor& grad) {
        const std::size_t L = g.length;
        const double* G = grad.data().data();
        const double* Q = t.value(iq).data().data();
        const double* K = t.value(ik).data().data();
        const double* V = t.value(iv).data().data();
        Tensor* dq = t.grad_sink(iq);
        Tensor* dk = t.grad_sink(ik);
        Tensor* dv = t.grad_sink(iv);
        const double inv_width = 1.0 / static_cast<double>(g.head_width);
        std::vector<double> dw;
        for (std::size_t n = 0; n < g.batch; ++n) {
          for (std::size_t h = 0; h < g.heads; ++h) {
            const DelaySet& set = sets[n * g.heads + h];
            const std::size_t base = n * L * g.width + h * g.head_width;
            const std::size_t kk = set.delays.size();
            dw.assign(kk, 0.0);
            for (std::size_t i = 0; i < kk; ++i) {
              const std::size_t tau = set.delays[i];
              const double w = set.weights[i];
              for (std::size_t tt = 0; tt < L; ++tt) {
                const std::size_t src = base + wrap(tt, tau, L) * g.width;
                const std::size_t dst = base + tt * g.width;
                double acc = 0.0;
                for (std::size_t ch = 0; ch < g.head_width; ++ch) {
                  acc += G[dst + ch] * V[src + ch];
                  if (dv) (*dv)[src + ch] += w * G[dst + ch];
                }
                dw[i] += acc;
              }
            }
            if (!dq && !dk) continue;
            double mixed = 0.0;
            for (std::size_t i = 0; i < kk; ++i) mixed += set.weights[i] * dw[i];
            for (std::size_t i = 0; i < kk; ++i) {
              const double dscore = set.weights[i] * (dw[i] - mixed) * inv_width;
              const std::size_t tau = set.delays[i];
              for (std::size_t tt = 0; tt < L; ++tt) {
                const std::size_t qs = base + wrap(tt, tau, L) * g.width;
                const std::size_t ks = base + tt * g.width;
                for (std::size_t ch = 0; ch < g.head_width; ++ch) {
                  if (dq) (*dq)[qs + ch] += dscore * K[ks + ch];
                  if (dk) (*dk)[ks + ch] += dscore * Q[qs + ch];
                }
              }
            }
          }
        }
      },
      "autocorrelation_block");
}

Tensor timestep_importance(const Tensor& q, const Tensor& k, std::size_t heads, double c) {
  if (q.shape() != k.shape()) throw ShapeError("timestep_importance: q/k shapes differ");
  const Geometry g = geometry(q.shape(), heads, "timestep_importance");
  const std::size_t L = g.length;
  Tensor out({g.batch, L});
  std::vector<double> scores(L);
  const double inv_heads = 1.0 / static_cast<double>(g.heads);
  const double inv_width = 1.0 / static_cast<double>(g.head_width);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      const Lane ql = lane_of(q, g, n, h);
      const Lane kl = lane_of(k, g, n, h);
      lane_scores(ql, kl, L, CorrelationPath::Direct, scores.data());
      const DelaySet set = top_k_delays(scores, L, c);
      for (std::size_t i = 0; i < set.delays.size(); ++i) {
        const std::size_t tau = set.delays[i];
        for (std::size_t t = 0; t < L; ++t) {
          double term = 0.0;
          for (std::size_t ch = 0; ch < g.head_width; ++ch) term += ql.at(wrap(t, tau, L), ch) * kl.at(t, ch);
          out.at(n, t) += inv_heads * set.weights[i] * term * inv_width;
        }
      }
    }
  }
  return out;
}

MultiHeadAutoCorrelation::MultiHeadAutoCorrelation(const std::string& name, const AutoCorrConfig& cfg,
                                                   CorrelationPath path, Rng& rng)
    : cfg_(cfg),
      path_(path),
      query_(name + ".query", cfg.d_model, cfg.d_model, true, rng),
      key_(name + ".key", cfg.d_model, cfg.d_model, true, rng),
      value_(name + ".value", cfg.d_model, cfg.d_model, true, rng),
      out_(name + ".out", cfg.d_model, cfg.d_model, true, rng) {
  validate(cfg_);
}

Var MultiHeadAutoCorrelation::operator()(Tape& tape, Var queries, Var keys, Var values) {
  const std::size_t length = queries.shape().at(time_axis(queries.shape()));
  Var q = query_(tape, queries);
  Var k = fit_time(key_(tape, keys), length);
  Var v = fit_time(value_(tape, values), length);
  return out_(tape, autocorrelation_block(q, k, v, cfg_.heads, cfg_.c, path_));
}

Tensor MultiHeadAutoCorrelation::self_importance(const Tensor& x) {
  Tape tape;
  Var xv = tape.constant(x);
  const Tensor q = query_(tape, xv).value();
  const Tensor k = key_(tape, xv).value();
  return timestep_importance(q, k, cfg_.heads, cfg_.c);
}

void MultiHeadAutoCorrelation::collect(std::vector<Parameter*>& out) {
  query_.collect(out);
  key_.collect(out);
  value_.collect(out);
  out_.collect(out);
}

}  // namespace mantra
