#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mantra/autodiff.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

class Rng;

// Elementwise arithmetic. The right operand may be broadcast when its shape
// is a suffix of the left operand's shape (bias-style) or a single element.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// [m, k] x [k, n] -> [m, n].
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x [..., in] * weight [in, out] + bias [out]; bias may be invalid (absent).
Var linear(Var x, Var weight, Var bias = Var());

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// Half-open range [begin, end) along an axis.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);

Var sum(Var x);
Var mean(Var x);
/// Mean along one axis, keeping that axis with size 1.
Var mean_axis(Var x, std::size_t axis);

/// Softmax along the last axis.
Var softmax(Var x);
/// Gaussian-error linear unit, exact erf form.
Var gelu(Var x);
/// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);

/// Value copy with no gradient path back to x.
Var detach(Var x);

/// Moving average along the time axis with edge-replication padding of
/// (kernel-1)/2 on both ends; output length equals input length.
/// Requires an odd kernel with kernel <= 2L-1.
Var avg_pool_1d(Var x, std::size_t kernel);
Tensor avg_pool_1d(const Tensor& x, std::size_t kernel);

/// out[t] = x[(t + tau) mod L] along the time axis, 0 <= tau <= L.
Var roll(Var x, std::size_t tau);
Tensor roll(const Tensor& x, std::size_t tau);

/// Truncates or zero-pads the time axis to `length` rows (pads at the end).
Var fit_time(Var x, std::size_t length);

}  // namespace mantra
