#include "mantra/decomposition.hpp"

#include "mantra/ops.hpp"

namespace mantra {

DecompPair series_decompose(const Tensor& x, std::size_t kernel) {
  DecompPair out{x, avg_pool_1d(x, kernel)};
  auto s = out.seasonal.data();
  auto t = out.trend_cyclical.data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] -= t[i];
  return out;
}

DecompVars series_decompose(Var x, std::size_t kernel) {
  Var trend = avg_pool_1d(x, kernel);
  return {sub(x, trend), trend};
}

}  // namespace mantra
