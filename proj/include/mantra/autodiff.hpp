#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>

#include "mantra/tensor.hpp"

namespace mantra {

class Tape;

/// A named tensor owned by a module. Gradients accumulate into `grad`
/// across backward passes until zero_grad().
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value) : name(std::move(name)), value(std::move(value)) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive and has not been reset.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of one forward pass. Single owner; reset between
/// batches. Nodes are appended in evaluation order, so the record is
/// topologically sorted by construction.
class Tape {
 public:
  /// Called during backward with the node's forward value and its gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to a parameter. Trainable parameters receive their gradient
  /// on backward(); frozen ones are recorded as constants. Repeated calls
  /// return the same node.
  Var param(Parameter& p);

  /// Records an op output. The node requires grad iff any input does; the
  /// backward function is dropped otherwise. Non-finite values throw.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op);

  /// Seeds d(root)/d(root) = 1 elementwise and propagates to every leaf.
  /// Parameter leaves accumulate into Parameter::grad.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of a node after backward(), zero if the pass never reached it.
  /// Throws if the node does not require grad.
  Tensor grad(Var v) const;

  /// Gradient accumulator for an input node, or nullptr if the node does not
  /// require grad. For use inside backward functions.
  Tensor* grad_sink(std::size_t id);
  Tensor* grad_sink(Var v) { return grad_sink(v.id()); }

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace mantra
