#pragma once

#include <cstddef>

#include "mantra/autodiff.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

/// Default moving-average window for the decomposition block.
inline constexpr std::size_t kDefaultDecompKernel = 25;

/// Seasonal and trend-cyclical parts of a series; seasonal + trend == input.
struct DecompPair {
  Tensor seasonal;
  Tensor trend_cyclical;
};

struct DecompVars {
  Var seasonal;
  Var trend_cyclical;
};

/// trend = moving average with edge-replicated padding, seasonal = x - trend.
/// Each channel is decomposed independently along the time axis.
DecompPair series_decompose(const Tensor& x, std::size_t kernel);
DecompVars series_decompose(Var x, std::size_t kernel);

}  // namespace mantra
