#include "mantra/ensemble.hpp"

#include <algorithm>
#include <set>

#include "mantra/errors.hpp"
#include "mantra/ops.hpp"

namespace mantra {

namespace {

constexpr std::uint64_t kSlowSeedOffset = 7919;
constexpr std::uint64_t kUrtSeedOffset = 104729;

}  // namespace

std::vector<std::uint64_t> EnsembleConfig::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(learners);
  for (std::size_t i = 0; i < learners; ++i) out[i] = seed * 1000 + i + 1;
  return out;
}

std::vector<std::string> validate(const EnsembleConfig& cfg) {
  if (cfg.learners == 0) throw ConfigError("ensemble.learners must be at least 1");
  if (!cfg.seeds.empty()) {
    if (cfg.seeds.size() != cfg.learners) {
      throw ConfigError("ensemble.seeds has " + std::to_string(cfg.seeds.size()) + " entries for " +
                        std::to_string(cfg.learners) + " learners");
    }
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
      throw ConfigError("ensemble.seeds must be distinct");
    }
  }
  return {};
}

std::vector<std::string> validate(const ModelConfig& cfg) {
  std::vector<std::string> w = validate(cfg.backbone);
  for (auto& s : validate(cfg.ensemble)) w.push_back(std::move(s));
  for (auto& s : validate(cfg.urt)) w.push_back(std::move(s));
  return w;
}

MantraModel::MantraModel(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  const std::vector<std::uint64_t> seeds = cfg.ensemble.resolved_seeds();
  BackboneConfig fast_cfg = cfg.backbone;
  fast_cfg.head = cfg.ensemble.fuse_slow ? HeadKind::Fused : HeadKind::Plain;
  for (std::size_t i = 0; i < seeds.size(); ++i) fast_.emplace_back("fast" + std::to_string(i), fast_cfg, seeds[i]);
  BackboneConfig slow_cfg = cfg.backbone;
  slow_cfg.head = HeadKind::None;
  slow_ = Backbone("slow", slow_cfg, cfg.ensemble.seed * 1000 + kSlowSeedOffset);
  urt_ = UrtLayer("urt", cfg.urt, seeds.size(), cfg.backbone.pred_len * cfg.backbone.out_dim,
                  cfg.ensemble.seed * 1000 + kUrtSeedOffset);
}

SharedFeatures MantraModel::slow_features(const Tensor& x) {
  Tape tape;
  LearnerFeatures f = slow_.forward(tape, x, ForwardContext{});
  return {f.seasonal.value(), f.trend.value()};
}

std::vector<Var> MantraModel::learner_predictions(Tape& tape, const Tensor& x, const ForwardContext& ctx,
                                                  const SharedFeatures* shared) {
  std::vector<Var> out;
  out.reserve(fast_.size());
  for (Backbone& b : fast_) out.push_back(b.forward(tape, x, ctx, shared).prediction);
  return out;
}

UrtOutput MantraModel::fuse(Tape& tape, std::span<const Var> preds) { return urt_(tape, preds); }

std::vector<Tensor> MantraModel::predict_learners(const Tensor& x) {
  SharedFeatures shared;
  if (cfg_.ensemble.fuse_slow) shared = slow_features(x);
  Tape tape;
  std::vector<Var> preds = learner_predictions(tape, x, ForwardContext{}, cfg_.ensemble.fuse_slow ? &shared : nullptr);
  std::vector<Tensor> out;
  for (Var p : preds) out.push_back(p.value());
  return out;
}

Tensor MantraModel::combine(std::span<const Tensor> preds, Aggregation agg) {
  if (preds.empty()) throw std::invalid_argument("combine: no forecasts");
  if (agg == Aggregation::Mean) {
    Tensor out(preds.front().shape());
    for (const Tensor& p : preds)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
    for (double& v : out.data()) v /= static_cast<double>(preds.size());
    return out;
  }
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : preds) vars.push_back(tape.constant(p));
  return urt_(tape, vars).prediction.value();
}

Tensor MantraModel::predict(const Tensor& x, Aggregation agg) {
  const std::vector<Tensor> preds = predict_learners(as_batch(x));
  return combine(preds, agg);
}

std::vector<Parameter*> MantraModel::fast_parameters() {
  std::vector<Parameter*> out;
  for (Backbone& b : fast_) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Parameter*> MantraModel::slow_parameters() { return slow_.parameters(); }
std::vector<Parameter*> MantraModel::urt_parameters() { return urt_.parameters(); }

std::vector<Parameter*> MantraModel::parameters() {
  std::vector<Parameter*> out = fast_parameters();
  for (Parameter* p : slow_parameters()) out.push_back(p);
  for (Parameter* p : urt_parameters()) out.push_back(p);
  return out;
}

ParameterCounts MantraModel::counts() {
  return {count_parameters(fast_parameters()), count_parameters(slow_parameters()),
          count_parameters(urt_parameters())};
}

Var half_mse(Var pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("half_mse: prediction " + shape_string(pred.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  Var diff = pred - pred.tape().constant(target);
  return mean(diff * diff) * 0.5;
}

}  // namespace mantra
