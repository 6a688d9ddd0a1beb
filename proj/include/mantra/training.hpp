#pragma once

// Two-phase training: fast and slow learners first, then the URT layer on
// frozen backbones; plus URT-only drift adaptation, evaluation helpers and
// epoch timing.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mantra/data.hpp"
#include "mantra/ensemble.hpp"

namespace mantra {

enum class Phase1Aggregation {
  Independent,  // each fast learner minimizes its own forecast loss
  ThroughUrt,   // the loss is taken on the output of the frozen URT layer
};

struct SlowConfig {
  double rho = 0.15;
  double epsilon = 0.3;
  double lambda = 0.5;
};

struct TrainConfig {
  std::size_t epochs = 10;        // phase 1
  std::size_t urt_epochs = 10;    // phase 2
  std::size_t adapt_epochs = 10;  // drift adaptation
  std::size_t batch_size = 32;
  double lr = 1e-2;
  double urt_lr = 1e-2;
  double lr_decay = 0.5;  // per epoch
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  Phase1Aggregation phase1_aggregation = Phase1Aggregation::Independent;
  SlowConfig slow;
};

std::vector<std::string> validate(const TrainConfig& cfg);

struct CurveRow {
  std::size_t epoch = 0;
  std::string phase;
  std::string split;
  std::string metric;
  double value = 0.0;
};

using LossCurve = std::vector<CurveRow>;

/// `epoch,phase,split,metric,value` with a header row.
void write_curve_csv(std::ostream& os, const LossCurve& curve);

struct TrainReport {
  LossCurve curve;
  std::size_t epochs_run = 0;
  double initial_val = 0.0;
  double best_val = 0.0;
  bool stopped_early = false;
  double seconds = 0.0;
  double seconds_per_epoch = 0.0;
  std::size_t attention_batches = 0;   // URT forwards checked for a partition of unity
  double max_partition_error = 0.0;    // max |sum(alpha) - 1| over those batches
};

/// First phase. Per batch: fast learners on the forecast loss;
/// slow learner on the masked-reconstruction loss; fast learners again on
/// forecast loss plus their own reconstruction loss under the same masks.
/// Early stopping on validation forecast MSE; the best epoch (or the initial
/// state) is restored.
TrainReport train_phase1(MantraModel& model, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg);

/// Second phase: backbones frozen, URT layer trained on the forecast loss plus
/// omega times the orthogonality penalty.
TrainReport train_phase2_urt(MantraModel& model, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg);

struct FreezeReport {
  std::size_t trainable = 0;
  std::size_t total = 0;
  double fraction = 0.0;
};

/// Marks exactly the URT parameters trainable.
FreezeReport adaptation_freeze_mask(MantraModel& model);
/// Marks exactly the fast and slow learner parameters trainable.
FreezeReport backbone_freeze_mask(MantraModel& model);

struct AdaptReport {
  Metrics pre;
  Metrics post;
  FreezeReport freeze;
  std::size_t epochs = 0;
  double seconds = 0.0;
  double seconds_per_epoch = 0.0;
  LossCurve curve;
};

/// URT-only updates on post-drift windows, scored on a held-out post-drift
/// slice before and after.
AdaptReport adapt_to_drift(MantraModel& model, const WindowSet& adapt, const WindowSet& holdout,
                           const TrainConfig& cfg);

/// Per-learner forecasts over all windows, computed in chronological batches.
std::vector<Tensor> learner_forecasts(MantraModel& model, const Tensor& x, std::size_t batch_size);

struct AttentionStats {
  std::size_t batches = 0;
  double max_partition_error = 0.0;
  bool negative = false;
  Tensor last_alpha;
};

/// Aggregates precomputed forecasts batch by batch (URT attention uses each
/// batch's own means).
Tensor combine_forecasts(MantraModel& model, std::span<const Tensor> forecasts, std::size_t batch_size,
                         Aggregation agg, AttentionStats* stats = nullptr);

Tensor forecast(MantraModel& model, const Tensor& x, std::size_t batch_size, Aggregation agg = Aggregation::Urt);
Metrics evaluate(MantraModel& model, const WindowSet& w, std::size_t batch_size, Aggregation agg = Aggregation::Urt);

/// A lone backbone with a plain head trained on the forecast loss only.
TrainReport train_single_backbone(Backbone& net, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg);
Tensor forecast_backbone(Backbone& net, const Tensor& x, std::size_t batch_size);

struct BenchRow {
  std::string model;  // "mantra" or "single"
  std::size_t windows = 0;
  std::size_t learners = 0;
  double seconds = 0.0;  // per epoch, best of the repeats
};

/// Wall-clock of one first-phase epoch on the first `windows` training windows.
double time_phase1_epoch(const ModelConfig& cfg, const WindowSet& train, std::size_t windows, const TrainConfig& tcfg,
                         std::size_t repeats);
double time_single_epoch(const BackboneConfig& cfg, const WindowSet& train, std::size_t windows,
                         const TrainConfig& tcfg, std::size_t repeats);

/// Timings for each size at the configured M, for M = 1 and 2 at the first
/// size, and for a single backbone at every size.
std::vector<BenchRow> bench_epoch_time(const ModelConfig& cfg, const WindowSet& train, std::span<const std::size_t> sizes,
                                       const TrainConfig& tcfg, std::size_t repeats);

struct BenchSummary {
  double n_ratio = 0.0;  // MANTRA epoch time, second size over first
  double m_ratio = 0.0;  // M = 2 over M = 1 at the first size
  bool mantra_slower = false;  // MANTRA above the single backbone at every size
};

BenchSummary summarize_bench(std::span<const BenchRow> rows);
void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows);

}  // namespace mantra
