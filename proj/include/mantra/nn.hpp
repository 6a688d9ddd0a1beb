#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mantra/autodiff.hpp"

namespace mantra {

class Rng;

/// Per-call forward settings. Dropout only fires in training mode with an rng.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

/// y = x W + b over the last axis. Weights start uniform in
/// [-1/sqrt(in), 1/sqrt(in)], as does the bias when present.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng);

  Var operator()(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }
  bool has_bias() const { return has_bias_; }

  Parameter weight;
  Parameter bias;

 private:
  bool has_bias_ = false;
};

/// Two linear maps around a GELU, widths d_model -> d_ff -> d_model.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t d_model, std::size_t d_ff, double dropout, Rng& rng);

  Var operator()(Tape& tape, Var x, const ForwardContext& ctx);
  void collect(std::vector<Parameter*>& out);

 private:
  Linear expand_;
  Linear contract_;
  double dropout_ = 0.0;
};

std::size_t count_parameters(const std::vector<Parameter*>& params);

}  // namespace mantra
