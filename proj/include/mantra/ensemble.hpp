#pragma once

// The full model: M fast learners with fused slow features, the slow
// learner, and the URT layer on top.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mantra/autoformer.hpp"
#include "mantra/urt.hpp"

namespace mantra {

struct EnsembleConfig {
  std::size_t learners = 3;          // M
  std::vector<std::uint64_t> seeds;  // empty: derived from `seed`
  std::uint64_t seed = 1;
  bool fuse_slow = true;

  std::vector<std::uint64_t> resolved_seeds() const;
};

std::vector<std::string> validate(const EnsembleConfig& cfg);

struct ModelConfig {
  BackboneConfig backbone;
  EnsembleConfig ensemble;
  UrtConfig urt;
};

std::vector<std::string> validate(const ModelConfig& cfg);

enum class Aggregation {
  Urt,   // attention-weighted by the URT layer
  Mean,  // plain average of the learner forecasts
};

struct ParameterCounts {
  std::size_t fast = 0;  // all M learners
  std::size_t slow = 0;
  std::size_t urt = 0;
  std::size_t total() const { return fast + slow + urt; }
};

class MantraModel {
 public:
  explicit MantraModel(const ModelConfig& cfg);

  /// Detached slow-learner decoder features for x [N, B, D].
  SharedFeatures slow_features(const Tensor& x);

  /// Forecasts of every fast learner, [N, O, out_dim] each. `shared` is
  /// required when slow features are fused.
  std::vector<Var> learner_predictions(Tape& tape, const Tensor& x, const ForwardContext& ctx,
                                       const SharedFeatures* shared);
  UrtOutput fuse(Tape& tape, std::span<const Var> preds);

  /// Inference on one batch of windows.
  Tensor predict(const Tensor& x, Aggregation agg = Aggregation::Urt);
  /// Per-learner forecasts on one batch of windows.
  std::vector<Tensor> predict_learners(const Tensor& x);
  /// Combines precomputed learner forecasts of one batch.
  Tensor combine(std::span<const Tensor> preds, Aggregation agg);

  std::size_t learners() const { return fast_.size(); }
  Backbone& fast(std::size_t i) { return fast_.at(i); }
  Backbone& slow() { return slow_; }
  UrtLayer& urt() { return urt_; }
  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter*> fast_parameters();
  std::vector<Parameter*> slow_parameters();
  std::vector<Parameter*> urt_parameters();
  /// Fast learners, then slow learner, then URT; the checkpoint order.
  std::vector<Parameter*> parameters();
  ParameterCounts counts();

 private:
  ModelConfig cfg_;
  std::vector<Backbone> fast_;
  Backbone slow_;
  UrtLayer urt_;
};

/// 0.5 * mean squared error over batch, steps and output channels.
Var half_mse(Var pred, const Tensor& target);

}  // namespace mantra
