#pragma once

// Period-based dependency discovery and time-delay aggregation.
//
// Scores are circular cross-correlations between query and key series,
//   R[tau] = (1/d) * sum_c sum_t q[(t + tau) mod L, c] * k[t, c],
// averaged over the d feature channels of one head. Delays range over
// 1..L (delay L is the zero shift). The k = max(1, floor(c * ln L)) largest
// scores are kept, their raw values softmaxed, and the value series is
// aggregated as sum_i roll(v, tau_i) * w_i. Delay selection is discrete: the
// gradient flows through the softmax weights and the rolled values only.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mantra/autodiff.hpp"
#include "mantra/nn.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

enum class CorrelationPath {
  Auto,    // direct below kFftMinLength, FFT from there on
  Direct,  // O(L^2 d)
  Fft,     // zero-padded radix-2 FFT, O(d L log L)
};

inline constexpr std::size_t kFftMinLength = 128;

struct AutoCorrConfig {
  double c = 1.0;
  std::size_t heads = 1;
  std::size_t d_model = 16;
};

/// Throws on structural errors; returns warnings (c outside [1, 3]).
std::vector<std::string> validate(const AutoCorrConfig& cfg);

struct DelaySet {
  std::vector<std::size_t> delays;  // each in [1, L], distinct
  std::vector<double> weights;      // softmax of the selected scores
};

/// Scores for a [L, d] query/key pair, indexed by tau mod L (entry 0 is
/// delay L).
std::vector<double> autocorrelation_scores(const Tensor& q, const Tensor& k,
                                           CorrelationPath path = CorrelationPath::Auto);

/// Number of delays kept for a series of length L.
std::size_t top_k_count(std::size_t length, double c);

/// Selects the top-k delays (ties broken by the smaller delay) and softmaxes
/// their raw scores.
DelaySet top_k_delays(std::span<const double> scores, std::size_t length, double c);

/// Fused, differentiable auto-correlation over [L, d] or [N, L, d] inputs.
/// Channels are split into `heads` contiguous groups, each scored and
/// aggregated independently per batch element. When `delays_out` is given it
/// receives one DelaySet per (batch, head), batch-major.
Var autocorrelation_block(Var q, Var k, Var v, std::size_t heads, double c,
                          CorrelationPath path = CorrelationPath::Auto, std::vector<DelaySet>* delays_out = nullptr);

/// Per-timestep share of the selected correlation mass: for each batch
/// element, importance[t] = mean over heads of sum_i w_i * c_i(t), where
/// c_i(t) is timestep t's term in the score of delay tau_i. Returns [N, L].
Tensor timestep_importance(const Tensor& q, const Tensor& k, std::size_t heads, double c);

/// Multi-head wrapper: per-head linear projections to Q/K/V, auto-correlation
/// per head, head concatenation, then the output projection W_out.
/// Keys/values are truncated or zero-padded to the query length.
class MultiHeadAutoCorrelation {
 public:
  MultiHeadAutoCorrelation() = default;
  MultiHeadAutoCorrelation(const std::string& name, const AutoCorrConfig& cfg, CorrelationPath path, Rng& rng);

  Var operator()(Tape& tape, Var queries, Var keys, Var values);

  /// Importance scores of the self-correlation of x ([N, L, d_model]).
  Tensor self_importance(const Tensor& x);

  void collect(std::vector<Parameter*>& out);

  Linear& query() { return query_; }
  Linear& key() { return key_; }
  Linear& value() { return value_; }
  Linear& output() { return out_; }

 private:
  AutoCorrConfig cfg_;
  CorrelationPath path_ = CorrelationPath::Auto;
  Linear query_, key_, value_, out_;
};

}  // namespace mantra
