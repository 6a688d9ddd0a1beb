#include "mantra/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"
#include "mantra/optim.hpp"
#include "mantra/rng.hpp"
#include "mantra/slow_learner.hpp"

namespace mantra {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

constexpr std::uint64_t kMaskStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kDropoutStream = 0xbf58476d1ce4e5b9ULL;

void check_loss(double v, const char* phase, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
  }
}

void set_trainable(const std::vector<Parameter*>& params, bool on) {
  for (Parameter* p : params) p->trainable = on;
}

std::vector<std::size_t> iota_index(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void check_attention(const Tensor& alpha, AttentionStats& stats) {
  ++stats.batches;
  for (std::size_t j = 0; j < alpha.dim(0); ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.dim(1); ++i) {
      total += alpha.at(j, i);
      if (alpha.at(j, i) < 0.0) stats.negative = true;
    }
    stats.max_partition_error = std::max(stats.max_partition_error, std::abs(total - 1.0));
  }
  stats.last_alpha = alpha;
}

double mse_of(const Tensor& pred, const Tensor& target) { return mse_mae(pred, target).mse; }

struct Phase1Sums {
  double mse = 0.0, l_m = 0.0, l_um = 0.0, l_s = 0.0;
  std::size_t batches = 0;
};

// One first-phase epoch over the given window order.
Phase1Sums phase1_epoch(MantraModel& model, const WindowSet& train, std::span<const std::size_t> order,
                        const TrainConfig& cfg, Adam& fast_opt, Adam& slow_opt, Rng& mask_rng, Rng& dropout_rng,
                        std::size_t epoch, AttentionStats& att) {
  const bool fuse = model.config().ensemble.fuse_slow;
  const bool through_urt = cfg.phase1_aggregation == Phase1Aggregation::ThroughUrt;
  const double inv_m = 1.0 / static_cast<double>(model.learners());
  ForwardContext ctx{true, &dropout_rng};
  Phase1Sums sums;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    const auto idx = order.subspan(b, std::min(cfg.batch_size, order.size() - b));
    const Tensor xb = gather(train.x, idx);
    const Tensor yb = gather(train.y, idx);

    // Fast learners on the forecast loss.
    SharedFeatures shared;
    if (fuse) shared = model.slow_features(xb);
    double batch_mse = 0.0;
    {
      fast_opt.zero_grad();
      Tape tape;
      std::vector<Var> preds = model.learner_predictions(tape, xb, ctx, fuse ? &shared : nullptr);
      Var loss;
      if (through_urt) {
        UrtOutput out = model.fuse(tape, preds);
        check_attention(out.attention.alpha.value(), att);
        loss = half_mse(out.prediction, yb);
        batch_mse = loss.value().item();
      } else {
        for (Var p : preds) {
          Var l = half_mse(p, yb);
          loss = loss.valid() ? loss + l : l;
        }
        batch_mse = loss.value().item() * inv_m;
      }
      check_loss(loss.value().item(), "phase1", epoch, b / cfg.batch_size);
      tape.backward(loss);
      fast_opt.step();
    }

    // Slow learner on controlled masked reconstruction.
    const Tensor importance = model.slow().importance(xb);
    const std::vector<MaskPlan> plans = select_masks(xb, importance, cfg.slow.rho, cfg.slow.epsilon, mask_rng);
    const Tensor masked = stack_masked(plans);
    {
      slow_opt.zero_grad();
      Tape tape;
      SlowLossVars sl = slow_losses(slow_reconstruct(model.slow(), tape, masked, ctx), xb, plans, cfg.slow.lambda);
      check_loss(sl.total.value().item(), "phase1 slow", epoch, b / cfg.batch_size);
      tape.backward(sl.total);
      slow_opt.step();
      const SlowLossReport r = sl.report();
      sums.l_m += r.loss_masked;
      sums.l_um += r.loss_unmasked;
      sums.l_s += r.loss_total;
    }

    // Fast learners on their own reconstruction loss plus the forecast loss.
    if (fuse) shared = model.slow_features(xb);
    {
      fast_opt.zero_grad();
      Tape tape;
      std::vector<Var> preds = model.learner_predictions(tape, xb, ctx, fuse ? &shared : nullptr);
      Var loss;
      if (through_urt) {
        UrtOutput out = model.fuse(tape, preds);
        check_attention(out.attention.alpha.value(), att);
        loss = half_mse(out.prediction, yb);
      } else {
        for (Var p : preds) {
          Var l = half_mse(p, yb);
          loss = loss.valid() ? loss + l : l;
        }
      }
      for (std::size_t i = 0; i < model.learners(); ++i) {
        loss = loss + slow_losses(slow_reconstruct(model.fast(i), tape, masked, ctx), xb, plans, cfg.slow.lambda).total;
      }
      check_loss(loss.value().item(), "phase1", epoch, b / cfg.batch_size);
      tape.backward(loss);
      fast_opt.step();
    }
    sums.mse += batch_mse;
    ++sums.batches;
  }
  return sums;
}

// One URT epoch over cached learner forecasts.
double urt_epoch(MantraModel& model, std::span<const Tensor> forecasts, const Tensor& y,
                 std::span<const std::size_t> order, const TrainConfig& cfg, Adam& opt, std::size_t epoch,
                 const char* phase, AttentionStats& att, double* omega_sum) {
  const double omega = model.urt().config().omega;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    const auto idx = order.subspan(b, std::min(cfg.batch_size, order.size() - b));
    const Tensor yb = gather(y, idx);
    opt.zero_grad();
    Tape tape;
    std::vector<Var> preds;
    for (const Tensor& f : forecasts) preds.push_back(tape.constant(gather(f, idx)));
    UrtOutput out = model.fuse(tape, preds);
    check_attention(out.attention.alpha.value(), att);
    Var mse = half_mse(out.prediction, yb);
    Var reg = urt_regularizer(out.attention.alpha);
    Var loss = mse + reg * omega;
    check_loss(loss.value().item(), phase, epoch, batches);
    tape.backward(loss);
    opt.step();
    total += mse.value().item();
    if (omega_sum) *omega_sum += reg.value().item();
    ++batches;
  }
  if (omega_sum) *omega_sum /= static_cast<double>(batches);
  return total / static_cast<double>(batches);
}

}  // namespace

std::vector<std::string> validate(const TrainConfig& cfg) {
  if (!(cfg.lr >= 0.0) || !(cfg.urt_lr >= 0.0)) throw ConfigError("train.lr must be nonnegative");
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (cfg.patience == 0) throw ConfigError("train.patience must be at least 1");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) throw ConfigError("train.lr_decay must lie in (0, 1]");
  if (!(cfg.slow.lambda >= 0.0 && cfg.slow.lambda <= 1.0)) throw ConfigError("slow.lambda must lie in [0, 1]");
  if (!(cfg.slow.rho > 0.0 && cfg.slow.rho < 1.0)) throw ConfigError("slow.rho must lie in (0, 1)");
  if (!(cfg.slow.epsilon >= 0.0 && cfg.slow.epsilon <= 1.0)) throw ConfigError("slow.epsilon must lie in [0, 1]");
  std::vector<std::string> w;
  if (cfg.lr == 0.0) w.push_back("train.lr is 0; parameters will not move");
  return w;
}

void write_curve_csv(std::ostream& os, const LossCurve& curve) {
  os << "epoch,phase,split,metric,value\n" << std::setprecision(17);
  for (const CurveRow& r : curve) os << r.epoch << ',' << r.phase << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
}

std::vector<Tensor> learner_forecasts(MantraModel& model, const Tensor& x, std::size_t batch_size) {
  const std::size_t N = x.dim(0);
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < N; b += batch_size) {
    const std::vector<Tensor> part = model.predict_learners(batch_range(x, b, std::min(N, b + batch_size)));
    if (out.empty()) {
      for (const Tensor& p : part) {
        Shape s = p.shape();
        s[0] = N;
        out.emplace_back(s);
      }
    }
    for (std::size_t i = 0; i < part.size(); ++i) {
      std::copy(part[i].data().begin(), part[i].data().end(), out[i].data().begin() + static_cast<std::ptrdiff_t>(b * (part[i].size() / part[i].dim(0))));
    }
  }
  return out;
}

Tensor combine_forecasts(MantraModel& model, std::span<const Tensor> forecasts, std::size_t batch_size,
                         Aggregation agg, AttentionStats* stats) {
  const std::size_t N = forecasts.front().dim(0);
  Tensor out(forecasts.front().shape());
  const std::size_t row = out.size() / N;
  for (std::size_t b = 0; b < N; b += batch_size) {
    const std::size_t e = std::min(N, b + batch_size);
    std::vector<Tensor> part;
    for (const Tensor& f : forecasts) part.push_back(batch_range(f, b, e));
    Tensor combined;
    if (agg == Aggregation::Urt && stats != nullptr) {
      Tape tape;
      std::vector<Var> vars;
      for (const Tensor& p : part) vars.push_back(tape.constant(p));
      UrtOutput o = model.fuse(tape, vars);
      check_attention(o.attention.alpha.value(), *stats);
      combined = o.prediction.value();
    } else {
      combined = model.combine(part, agg);
    }
    std::copy(combined.data().begin(), combined.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * row));
  }
  return out;
}

Tensor forecast(MantraModel& model, const Tensor& x, std::size_t batch_size, Aggregation agg) {
  const std::vector<Tensor> f = learner_forecasts(model, x, batch_size);
  return combine_forecasts(model, f, batch_size, agg);
}

Metrics evaluate(MantraModel& model, const WindowSet& w, std::size_t batch_size, Aggregation agg) {
  return mse_mae(forecast(model, w.x, batch_size, agg), w.y);
}

FreezeReport adaptation_freeze_mask(MantraModel& model) {
  set_trainable(model.fast_parameters(), false);
  set_trainable(model.slow_parameters(), false);
  set_trainable(model.urt_parameters(), true);
  const ParameterCounts c = model.counts();
  return {c.urt, c.total(), static_cast<double>(c.urt) / static_cast<double>(c.total())};
}

FreezeReport backbone_freeze_mask(MantraModel& model) {
  set_trainable(model.fast_parameters(), true);
  set_trainable(model.slow_parameters(), true);
  set_trainable(model.urt_parameters(), false);
  const ParameterCounts c = model.counts();
  const std::size_t n = c.fast + c.slow;
  return {n, c.total(), static_cast<double>(n) / static_cast<double>(c.total())};
}

TrainReport train_phase1(MantraModel& model, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg) {
  validate(cfg);
  const auto start = Clock::now();
  backbone_freeze_mask(model);
  Adam fast_opt(model.fast_parameters(), cfg.lr);
  Adam slow_opt(model.slow_parameters(), cfg.lr);
  Rng shuffle_rng(cfg.seed), mask_rng(cfg.seed ^ kMaskStream), dropout_rng(cfg.seed ^ kDropoutStream);
  const Aggregation val_agg =
      cfg.phase1_aggregation == Phase1Aggregation::ThroughUrt ? Aggregation::Urt : Aggregation::Mean;

  std::vector<Parameter*> tracked = model.fast_parameters();
  for (Parameter* p : model.slow_parameters()) tracked.push_back(p);

  TrainReport rep;
  AttentionStats att;
  EarlyStopping stopper(cfg.patience);
  rep.initial_val = evaluate(model, val, cfg.batch_size, val_agg).mse;
  stopper.update(rep.initial_val);
  Snapshot best(tracked);

  std::vector<std::size_t> order = iota_index(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    fast_opt.set_lr(lr);
    slow_opt.set_lr(lr);
    shuffle_rng.shuffle(order.begin(), order.end());
    const Phase1Sums s =
        phase1_epoch(model, train, order, cfg, fast_opt, slow_opt, mask_rng, dropout_rng, epoch, att);
    const double n = static_cast<double>(s.batches);
    const double val_mse = evaluate(model, val, cfg.batch_size, val_agg).mse;
    rep.curve.push_back({epoch, "phase1", "train", "l_mse", s.mse / n});
    rep.curve.push_back({epoch, "phase1", "train", "l_m", s.l_m / n});
    rep.curve.push_back({epoch, "phase1", "train", "l_um", s.l_um / n});
    rep.curve.push_back({epoch, "phase1", "train", "l_s", s.l_s / n});
    rep.curve.push_back({epoch, "phase1", "val", "mse", val_mse});
    rep.epochs_run = epoch;
    if (stopper.update(val_mse)) best = Snapshot(tracked);
    if (stopper.should_stop()) {
      rep.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  best.restore();
  rep.best_val = stopper.best();
  rep.seconds = elapsed(start);
  rep.seconds_per_epoch = rep.epochs_run ? rep.seconds / static_cast<double>(rep.epochs_run) : 0.0;
  rep.attention_batches = att.batches;
  rep.max_partition_error = att.max_partition_error;
  if (att.negative) throw NumericError("phase1: negative attention weight");
  return rep;
}

TrainReport train_phase2_urt(MantraModel& model, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg) {
  validate(cfg);
  const auto start = Clock::now();
  adaptation_freeze_mask(model);
  Adam opt(model.urt_parameters(), cfg.urt_lr);
  Rng shuffle_rng(cfg.seed + 1);

  // Backbones are frozen, so their forecasts are computed once.
  const std::vector<Tensor> train_f = learner_forecasts(model, train.x, cfg.batch_size);
  const std::vector<Tensor> val_f = learner_forecasts(model, val.x, cfg.batch_size);

  TrainReport rep;
  AttentionStats att;
  EarlyStopping stopper(cfg.patience);
  rep.initial_val = mse_of(combine_forecasts(model, val_f, cfg.batch_size, Aggregation::Urt, &att), val.y);
  stopper.update(rep.initial_val);
  Snapshot best(model.urt_parameters());

  std::vector<std::size_t> order = iota_index(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.urt_epochs; ++epoch) {
    opt.set_lr(cfg.urt_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1)));
    shuffle_rng.shuffle(order.begin(), order.end());
    double omega = 0.0;
    const double train_mse = urt_epoch(model, train_f, train.y, order, cfg, opt, epoch, "phase2", att, &omega);
    const double val_mse = mse_of(combine_forecasts(model, val_f, cfg.batch_size, Aggregation::Urt, &att), val.y);
    rep.curve.push_back({epoch, "phase2", "train", "l_mse", train_mse});
    rep.curve.push_back({epoch, "phase2", "train", "omega", omega});
    rep.curve.push_back({epoch, "phase2", "val", "mse", val_mse});
    rep.epochs_run = epoch;
    if (stopper.update(val_mse)) best = Snapshot(model.urt_parameters());
    if (stopper.should_stop()) {
      rep.stopped_early = epoch < cfg.urt_epochs;
      break;
    }
  }
  best.restore();
  rep.best_val = stopper.best();
  rep.seconds = elapsed(start);
  rep.seconds_per_epoch = rep.epochs_run ? rep.seconds / static_cast<double>(rep.epochs_run) : 0.0;
  rep.attention_batches = att.batches;
  rep.max_partition_error = att.max_partition_error;
  if (att.negative) throw NumericError("phase2: negative attention weight");
  return rep;
}

AdaptReport adapt_to_drift(MantraModel& model, const WindowSet& adapt, const WindowSet& holdout,
                           const TrainConfig& cfg) {
  validate(cfg);
  const auto start = Clock::now();
  AdaptReport rep;
  rep.freeze = adaptation_freeze_mask(model);
  const std::vector<Tensor> adapt_f = learner_forecasts(model, adapt.x, cfg.batch_size);
  const std::vector<Tensor> hold_f = learner_forecasts(model, holdout.x, cfg.batch_size);
  rep.pre = mse_mae(combine_forecasts(model, hold_f, cfg.batch_size, Aggregation::Urt), holdout.y);

  Adam opt(model.urt_parameters(), cfg.urt_lr);
  Rng shuffle_rng(cfg.seed + 2);
  AttentionStats att;
  std::vector<std::size_t> order = iota_index(adapt.size());
  for (std::size_t epoch = 1; epoch <= cfg.adapt_epochs; ++epoch) {
    opt.set_lr(cfg.urt_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1)));
    shuffle_rng.shuffle(order.begin(), order.end());
    const double train_mse = urt_epoch(model, adapt_f, adapt.y, order, cfg, opt, epoch, "adapt", att, nullptr);
    rep.curve.push_back({epoch, "adapt", "train", "l_mse", train_mse});
    rep.epochs = epoch;
  }
  rep.post = mse_mae(combine_forecasts(model, hold_f, cfg.batch_size, Aggregation::Urt), holdout.y);
  rep.seconds = elapsed(start);
  rep.seconds_per_epoch = rep.epochs ? rep.seconds / static_cast<double>(rep.epochs) : 0.0;
  return rep;
}

Tensor forecast_backbone(Backbone& net, const Tensor& x, std::size_t batch_size) {
  const std::size_t N = x.dim(0);
  Tensor out;
  for (std::size_t b = 0; b < N; b += batch_size) {
    Tape tape;
    const Tensor p = net.forward(tape, batch_range(x, b, std::min(N, b + batch_size)), ForwardContext{}).prediction.value();
    if (out.empty()) {
      Shape s = p.shape();
      s[0] = N;
      out = Tensor(s);
    }
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * (p.size() / p.dim(0))));
  }
  return out;
}

TrainReport train_single_backbone(Backbone& net, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg) {
  validate(cfg);
  if (net.config().head != HeadKind::Plain) throw ConfigError("single-backbone training needs a plain head");
  const auto start = Clock::now();
  Adam opt(net.parameters(), cfg.lr);
  Rng shuffle_rng(cfg.seed), dropout_rng(cfg.seed ^ kDropoutStream);
  ForwardContext ctx{true, &dropout_rng};
  TrainReport rep;
  EarlyStopping stopper(cfg.patience);
  rep.initial_val = val.size() ? mse_of(forecast_backbone(net, val.x, cfg.batch_size), val.y) : 0.0;
  stopper.update(rep.initial_val);
  Snapshot best(net.parameters());
  std::vector<std::size_t> order = iota_index(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    opt.set_lr(cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1)));
    shuffle_rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto idx = std::span<const std::size_t>(order).subspan(b, std::min(cfg.batch_size, order.size() - b));
      opt.zero_grad();
      Tape tape;
      Var loss = half_mse(net.forward(tape, gather(train.x, idx), ctx).prediction, gather(train.y, idx));
      check_loss(loss.value().item(), "single", epoch, batches);
      tape.backward(loss);
      opt.step();
      total += loss.value().item();
      ++batches;
    }
    rep.curve.push_back({epoch, "single", "train", "l_mse", total / static_cast<double>(batches)});
    rep.epochs_run = epoch;
    if (val.size() == 0) continue;
    const double val_mse = mse_of(forecast_backbone(net, val.x, cfg.batch_size), val.y);
    rep.curve.push_back({epoch, "single", "val", "mse", val_mse});
    if (stopper.update(val_mse)) best = Snapshot(net.parameters());
    if (stopper.should_stop()) {
      rep.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  if (val.size()) best.restore();
  rep.best_val = stopper.best();
  rep.seconds = elapsed(start);
  rep.seconds_per_epoch = rep.epochs_run ? rep.seconds / static_cast<double>(rep.epochs_run) : 0.0;
  return rep;
}

double time_phase1_epoch(const ModelConfig& cfg, const WindowSet& train, std::size_t windows, const TrainConfig& tcfg,
                         std::size_t repeats) {
  if (windows == 0 || windows > train.size()) throw ConfigError("bench size exceeds the available windows");
  const std::vector<std::size_t> order = iota_index(windows);
  double best = 0.0;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    MantraModel model(cfg);
    backbone_freeze_mask(model);
    Adam fast_opt(model.fast_parameters(), tcfg.lr), slow_opt(model.slow_parameters(), tcfg.lr);
    Rng mask_rng(tcfg.seed ^ kMaskStream), dropout_rng(tcfg.seed ^ kDropoutStream);
    AttentionStats att;
    const auto start = Clock::now();
    phase1_epoch(model, train, order, tcfg, fast_opt, slow_opt, mask_rng, dropout_rng, 1, att);
    const double s = elapsed(start);
    best = r == 0 ? s : std::min(best, s);
  }
  return best;
}

double time_single_epoch(const BackboneConfig& cfg, const WindowSet& train, std::size_t windows,
                         const TrainConfig& tcfg, std::size_t repeats) {
  if (windows == 0 || windows > train.size()) throw ConfigError("bench size exceeds the available windows");
  BackboneConfig plain = cfg;
  plain.head = HeadKind::Plain;
  const WindowSet sub{batch_range(train.x, 0, windows), batch_range(train.y, 0, windows)};
  TrainConfig one = tcfg;
  one.epochs = 1;
  double best = 0.0;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    Backbone net("single", plain, tcfg.seed);
    const auto start = Clock::now();
    train_single_backbone(net, sub, WindowSet{}, one);
    const double s = elapsed(start);
    best = r == 0 ? s : std::min(best, s);
  }
  return best;
}

std::vector<BenchRow> bench_epoch_time(const ModelConfig& cfg, const WindowSet& train,
                                       std::span<const std::size_t> sizes, const TrainConfig& tcfg,
                                       std::size_t repeats) {
  if (sizes.empty()) throw ConfigError("bench needs at least one size");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("bench sizes must be ascending");
  std::vector<BenchRow> rows;
  std::vector<ModelConfig> configs;
  const std::size_t M = cfg.ensemble.learners;
  for (std::size_t n : sizes) {
    rows.push_back({"mantra", n, M, 0.0});
    configs.push_back(cfg);
    rows.push_back({"single", n, 1, 0.0});
    configs.push_back(cfg);
  }
  for (std::size_t m : {std::size_t{1}, std::size_t{2}}) {
    if (m == M) continue;
    ModelConfig c = cfg;
    c.ensemble.learners = m;
    c.ensemble.seeds.clear();
    rows.push_back({"mantra", sizes.front(), m, 0.0});
    configs.push_back(c);
  }
  // Round-robin over the settings; each keeps its fastest sample.
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      BenchRow& row = rows[i];
      const double s = row.model == "single" ? time_single_epoch(configs[i].backbone, train, row.windows, tcfg, 1)
                                             : time_phase1_epoch(configs[i], train, row.windows, tcfg, 1);
      row.seconds = r == 0 ? s : std::min(row.seconds, s);
    }
  }
  return rows;
}

BenchSummary summarize_bench(std::span<const BenchRow> rows) {
  auto find = [&](const std::string& model, std::size_t windows, std::size_t learners) -> const BenchRow* {
    for (const BenchRow& r : rows) {
      if (r.model == model && r.windows == windows && r.learners == learners) return &r;
    }
    return nullptr;
  };
  BenchSummary s;
  std::vector<std::size_t> sizes;
  std::size_t M = 0;
  for (const BenchRow& r : rows) {
    if (r.model == "single") sizes.push_back(r.windows);
  }
  for (const BenchRow& r : rows) M = std::max(M, r.model == "mantra" ? r.learners : 0);
  if (sizes.empty()) throw ConfigError("bench table has no single-backbone rows");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.n_ratio = nan;
  s.m_ratio = nan;
  if (sizes.size() >= 2) {
    const BenchRow* a = find("mantra", sizes[0], M);
    const BenchRow* b = find("mantra", sizes[1], M);
    if (a && b) s.n_ratio = b->seconds / a->seconds;
  }
  const BenchRow* m1 = find("mantra", sizes[0], 1);
  const BenchRow* m2 = find("mantra", sizes[0], 2);
  if (m1 && m2) s.m_ratio = m2->seconds / m1->seconds;
  s.mantra_slower = true;
  for (std::size_t n : sizes) {
    const BenchRow* m = find("mantra", n, M);
    const BenchRow* single = find("single", n, 1);
    if (!m || !single || !(m->seconds > single->seconds)) s.mantra_slower = false;
  }
  return s;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "model,windows,learners,seconds_per_epoch\n" << std::setprecision(6);
  for (const BenchRow& r : rows) os << r.model << ',' << r.windows << ',' << r.learners << ',' << r.seconds << '\n';
}

}  // namespace mantra
