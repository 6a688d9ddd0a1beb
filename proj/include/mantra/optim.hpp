#pragma once

#include <cstddef>
#include <vector>

#include "mantra/autodiff.hpp"

namespace mantra {

/// Adam over a fixed parameter group. Frozen parameters are skipped.
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, double lr = 1e-2, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::size_t steps() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Tracks the best validation value; stop once `patience` epochs in a row
/// fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records a value; returns true when it is a new best.
  bool update(double value);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  std::size_t since_best() const { return since_best_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t since_best_ = 0;
};

/// Copies of parameter values, restorable later.
class Snapshot {
 public:
  Snapshot() = default;
  explicit Snapshot(const std::vector<Parameter*>& params);
  void restore() const;

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> values_;
};

}  // namespace mantra
