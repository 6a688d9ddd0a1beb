#include "mantra/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mantra/errors.hpp"
#include "mantra/rng.hpp"

namespace mantra {

namespace {

enum class Broadcast { Same, Suffix };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::Same;
  if (shape_size(b) == 1) return Broadcast::Suffix;
  if (b.size() < a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    return Broadcast::Suffix;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
}

// Strides around an axis: `outer` blocks of `len` rows of `inner` contiguous values.
struct AxisView {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw ShapeError("axis out of range for " + shape_string(shape));
  AxisView v{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void check_pool_kernel(std::size_t kernel, std::size_t length) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw std::invalid_argument("avg_pool_1d: kernel must be odd and positive, got " + std::to_string(kernel));
  }
  if (kernel > 2 * length - 1) {
    throw std::invalid_argument("avg_pool_1d: kernel " + std::to_string(kernel) + " exceeds 2L-1 for L=" +
                                std::to_string(length));
  }
}

// Forward moving average over one strided lane via a sliding sum over the
// edge-replicated sequence.
void pool_lane(const double* x, double* y, std::size_t len, std::size_t stride, std::size_t kernel,
               std::vector<double>& padded) {
  const std::size_t half = (kernel - 1) / 2;
  padded.resize(len + 2 * half);
  for (std::size_t u = 0; u < padded.size(); ++u) {
    const std::ptrdiff_t src =
        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(half), 0,
                                   static_cast<std::ptrdiff_t>(len) - 1);
    padded[u] = x[static_cast<std::size_t>(src) * stride];
  }
  const double inv = 1.0 / static_cast<double>(kernel);
  double acc = 0.0;
  for (std::size_t j = 0; j < kernel; ++j) acc += padded[j];
  y[0] = acc * inv;
  for (std::size_t t = 1; t < len; ++t) {
    acc += padded[t + kernel - 1] - padded[t - 1];
    y[t * stride] = acc * inv;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av.shape(), bv.shape(), "add");
  Tensor out = av;
  const std::size_t nb = bv.size();
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[kind == Broadcast::Same ? i : i % nb];
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id(), kind, nb](Tape& t, const Tensor&, const Tensor& g) {
                           auto gd = g.data();
                           if (Tensor* ga = t.grad_sink(ia)) {
                             auto d = ga->data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
                           }
                           if (Tensor* gb = t.grad_sink(ib)) {
                             auto d = gb->data();
                             for (std::size_t i = 0; i < gd.size(); ++i) d[kind == Broadcast::Same ? i : i % nb] += gd[i];
                           }
                         },
                         "add");
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av.shape(), bv.shape(), "sub");
  Tensor out = av;
  const std::size_t nb = bv.size();
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[kind == Broadcast::Same ? i : i % nb];
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id(), kind, nb](Tape& t, const Tensor&, const Tensor& g) {
                           auto gd = g.data();
                           if (Tensor* ga = t.grad_sink(ia)) {
                             auto d = ga->data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
                           }
                           if (Tensor* gb = t.grad_sink(ib)) {
                             auto d = gb->data();
                             for (std::size_t i = 0; i < gd.size(); ++i) d[kind == Broadcast::Same ? i : i % nb] -= gd[i];
                           }
                         },
                         "sub");
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av.shape(), bv.shape(), "mul");
  Tensor out = av;
  const std::size_t nb = bv.size();
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[kind == Broadcast::Same ? i : i % nb];
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id(), kind, nb](Tape& t, const Tensor&, const Tensor& g) {
                           auto gd = g.data();
                           auto ad = t.value(ia).data();
                           auto bd = t.value(ib).data();
                           if (Tensor* ga = t.grad_sink(ia)) {
                             auto d = ga->data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * bd[kind == Broadcast::Same ? i : i % nb];
                           }
                           if (Tensor* gb = t.grad_sink(ib)) {
                             auto d = gb->data();
                             for (std::size_t i = 0; i < gd.size(); ++i) d[kind == Broadcast::Same ? i : i % nb] += gd[i] * ad[i];
                           }
                         },
                         "mul");
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), factor](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.grad_sink(ia)) {
                             auto d = ga->data();
                             auto gd = g.data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gd[i];
                           }
                         },
                         "scale");
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  const double* A = av.data().data();
  const double* B = bv.data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
    }
  }
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id(), m, k, n](Tape& t, const Tensor&, const Tensor& g) {
                           const double* G = g.data().data();
                           const double* A = t.value(ia).data().data();
                           const double* B = t.value(ib).data().data();
                           if (Tensor* ga = t.grad_sink(ia)) {
                             double* dA = ga->data().data();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                                 dA[i * k + p] += acc;
                               }
                           }
                           if (Tensor* gb = t.grad_sink(ib)) {
                             double* dB = gb->data().data();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double aip = A[i * k + p];
                                 for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
                               }
                           }
                         },
                         "matmul");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), m, n](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.grad_sink(ia)) {
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) ga->at(i, j) += g.at(j, i);
                           }
                         },
                         "transpose");
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.shape().back() != wv.dim(0)) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  }
  const std::size_t in = wv.dim(0), outw = wv.dim(1), rows = xv.size() / in;
  if (bias.valid() && bias.value().size() != outw) {
    throw ShapeError("linear: bias " + shape_string(bias.value().shape()) + " vs width " + std::to_string(outw));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = outw;
  Tensor out(out_shape);
  const double* __restrict X = xv.data().data();
  const double* __restrict W = wv.data().data();
  double* __restrict Y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* __restrict y = Y + r * outw;
    if (bias.valid()) {
      const double* b = bias.value().data().data();
      for (std::size_t o = 0; o < outw; ++o) y[o] = b[o];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = X[r * in + i];
      const double* __restrict w = W + i * outw;
      for (std::size_t o = 0; o < outw; ++o) y[o] += xi * w[o];
    }
  }
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  const std::size_t ib = bias.valid() ? bias.id() : 0;
  return x.tape().record(
      std::move(out), inputs,
      [ix = x.id(), iw = weight.id(), ib, has_bias = bias.valid(), in, outw, rows](Tape& t, const Tensor&,
                                                                                   const Tensor& g) {
        const double* __restrict G = g.data().data();
        const double* __restrict X = t.value(ix).data().data();
        const double* W = t.value(iw).data().data();
        if (Tensor* gx = t.grad_sink(ix)) {
          // Row-major W^T keeps the inner loop contiguous.
          std::vector<double> wt(in * outw);
          for (std::size_t i = 0; i < in; ++i)
            for (std::size_t o = 0; o < outw; ++o) wt[o * in + i] = W[i * outw + o];
          const double* __restrict Wt = wt.data();
          double* __restrict dX = gx->data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            double* __restrict dx = dX + r * in;
            for (std::size_t o = 0; o < outw; ++o) {
              const double gro = G[r * outw + o];
              const double* __restrict w = Wt + o * in;
              for (std::size_t i = 0; i < in; ++i) dx[i] += gro * w[i];
            }
          }
        }
        if (Tensor* gw = t.grad_sink(iw)) {
          double* __restrict dW = gw->data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < in; ++i) {
              const double xi = X[r * in + i];
              const double* __restrict gr = G + r * outw;
              double* __restrict dw = dW + i * outw;
              for (std::size_t o = 0; o < outw; ++o) dw[o] += xi * gr[o];
            }
        }
        if (has_bias) {
          if (Tensor* gb = t.grad_sink(ib)) {
            double* dB = gb->data().data();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t o = 0; o < outw; ++o) dB[o] += G[r * outw + o];
          }
        }
      },
      "linear");
}

// ---------------------------------------------------------------------------
// Structural

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  out_shape.at(axis) = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_string(s) + " vs " + shape_string(first) + " on axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  const AxisView ov = axis_view(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t chunk = pv.dim(axis) * ov.inner;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pv.data().data() + o * chunk, chunk, out.data().data() + o * ov.len * ov.inner + offset);
    }
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += chunk;
  }
  Tape& tape = parts[0].tape();
  return tape.record(std::move(out), parts,
                     [ids, offsets, ov](Tape& t, const Tensor&, const Tensor& g) {
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         Tensor* gp = t.grad_sink(ids[k]);
                         if (!gp) continue;
                         const std::size_t chunk = gp->size() / ov.outer;
                         for (std::size_t o = 0; o < ov.outer; ++o) {
                           const double* src = g.data().data() + o * ov.len * ov.inner + offsets[k];
                           double* dst = gp->data().data() + o * chunk;
                           for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                         }
                       }
                     },
                     "concat");
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const AxisView v = axis_view(xv.shape(), axis);
  if (begin >= end || end > v.len) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_string(xv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const std::size_t chunk = (end - begin) * v.inner;
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(xv.data().data() + (o * v.len + begin) * v.inner, chunk, out.data().data() + o * chunk);
  }
  return x.tape().record(std::move(out), {x},
                         [ix = x.id(), v, begin, chunk](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             for (std::size_t o = 0; o < v.outer; ++o) {
                               const double* src = g.data().data() + o * chunk;
                               double* dst = gx->data().data() + (o * v.len + begin) * v.inner;
                               for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                             }
                           }
                         },
                         "slice");
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x},
                         [ix = x.id()](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             auto d = gx->data();
                             auto gd = g.data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i];
                           }
                         },
                         "reshape");
}

Var fit_time(Var x, std::size_t length) {
  const Shape& s = x.shape();
  const std::size_t axis = time_axis(s);
  const std::size_t have = s.at(axis);
  if (have == length) return x;
  if (have > length) return slice(x, axis, 0, length);
  Shape pad_shape = s;
  pad_shape[axis] = length - have;
  Var zeros = x.tape().constant(Tensor(pad_shape));
  return concat({x, zeros}, axis);
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape().record(Tensor::scalar(acc), {x},
                         [ix = x.id()](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             const double gv = g[0];
                             for (double& d : gx->data()) d += gv;
                           }
                         },
                         "sum");
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mean_axis(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisView v = axis_view(xv.shape(), axis);
  Shape out_shape = xv.shape();
  out_shape[axis] = 1;
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(v.len);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += xv[(o * v.len + l) * v.inner + i];
  for (double& d : out.data()) d *= inv;
  return x.tape().record(std::move(out), {x},
                         [ix = x.id(), v, inv](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             for (std::size_t o = 0; o < v.outer; ++o)
                               for (std::size_t l = 0; l < v.len; ++l)
                                 for (std::size_t i = 0; i < v.inner; ++i)
                                   (*gx)[(o * v.len + l) * v.inner + i] += g[o * v.inner + i] * inv;
                           }
                         },
                         "mean_axis");
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var softmax(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("softmax of a rank-0 tensor");
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.size() / width;
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < width; ++j) row[j] /= z;
  }
  return x.tape().record(std::move(out), {x},
                         [ix = x.id(), width, rows](Tape& t, const Tensor& y, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             for (std::size_t r = 0; r < rows; ++r) {
                               const double* yr = y.data().data() + r * width;
                               const double* gr = g.data().data() + r * width;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < width; ++j) dot += yr[j] * gr[j];
                               double* d = gx->data().data() + r * width;
                               for (std::size_t j = 0; j < width; ++j) d[j] += yr[j] * (gr[j] - dot);
                             }
                           }
                         },
                         "softmax");
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return x.tape().record(std::move(out), {x},
                         [ix = x.id()](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             auto xd = t.value(ix).data();
                             auto d = gx->data();
                             constexpr double kInvSqrt2Pi = 0.3989422804014327;
                             for (std::size_t i = 0; i < d.size(); ++i) {
                               const double v = xd[i];
                               const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
                               const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                               d[i] += g[i] * (cdf + v * pdf);
                             }
                           }
                         },
                         "gelu");
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep;
  return mul(x, x.tape().constant(std::move(mask)));
}

Var detach(Var x) { return x.tape().constant(x.value()); }

// ---------------------------------------------------------------------------
// Series ops

Tensor avg_pool_1d(const Tensor& x, std::size_t kernel) {
  const std::size_t axis = time_axis(x.shape());
  const AxisView v = axis_view(x.shape(), axis);
  check_pool_kernel(kernel, v.len);
  Tensor out(x.shape());
  std::vector<double> padded;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      pool_lane(x.data().data() + base, out.data().data() + base, v.len, v.inner, kernel, padded);
    }
  return out;
}

Var avg_pool_1d(Var x, std::size_t kernel) {
  Tensor out = avg_pool_1d(x.value(), kernel);
  const AxisView v = axis_view(x.shape(), time_axis(x.shape()));
  return x.tape().record(
      std::move(out), {x},
      [ix = x.id(), v, kernel](Tape& t, const Tensor&, const Tensor& g) {
        Tensor* gx = t.grad_sink(ix);
        if (!gx) return;
        const std::size_t half = (kernel - 1) / 2;
        const double inv = 1.0 / static_cast<double>(kernel);
        const std::size_t L = v.len;
        std::vector<double> dpad(L + 2 * half);
        for (std::size_t o = 0; o < v.outer; ++o)
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * L * v.inner + i;
            const double* gl = g.data().data() + base;
            // out[t] averages padded[t .. t+2h], so padded[u] collects the
            // gradients of out[u-2h .. u]: a sliding sum over g.
            double acc = 0.0;
            for (std::size_t u = 0; u < dpad.size(); ++u) {
              if (u < L) acc += gl[u * v.inner];
              if (u >= kernel) acc -= gl[(u - kernel) * v.inner];
              dpad[u] = acc * inv;
            }
            double* dl = gx->data().data() + base;
            for (std::size_t u = 0; u < dpad.size(); ++u) {
              const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(
                  static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(half), 0, static_cast<std::ptrdiff_t>(L) - 1);
              dl[static_cast<std::size_t>(src) * v.inner] += dpad[u];
            }
          }
      },
      "avg_pool_1d");
}

Tensor roll(const Tensor& x, std::size_t tau) {
  const AxisView v = axis_view(x.shape(), time_axis(x.shape()));
  if (tau > v.len) throw std::invalid_argument("roll: delay " + std::to_string(tau) + " exceeds length " + std::to_string(v.len));
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t tt = 0; tt < v.len; ++tt) {
      const std::size_t src = (tt + tau) % v.len;
      std::copy_n(x.data().data() + (o * v.len + src) * v.inner, v.inner, out.data().data() + (o * v.len + tt) * v.inner);
    }
  return out;
}

Var roll(Var x, std::size_t tau) {
  Tensor out = roll(x.value(), tau);
  const AxisView v = axis_view(x.shape(), time_axis(x.shape()));
  return x.tape().record(std::move(out), {x},
                         [ix = x.id(), v, tau](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gx = t.grad_sink(ix)) {
                             for (std::size_t o = 0; o < v.outer; ++o)
                               for (std::size_t tt = 0; tt < v.len; ++tt) {
                                 const std::size_t src = (tt + tau) % v.len;
                                 const double* gs = g.data().data() + (o * v.len + tt) * v.inner;
                                 double* d = gx->data().data() + (o * v.len + src) * v.inner;
                                 for (std::size_t i = 0; i < v.inner; ++i) d[i] += gs[i];
                               }
                           }
                         },
                         "roll");
}

}  // namespace mantra
