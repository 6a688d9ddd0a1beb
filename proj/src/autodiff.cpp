#include "mantra/autodiff.hpp"

#include <string>

#include "mantra/errors.hpp"

namespace mantra {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  require_finite(value, "variable");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  require_finite(p.value, p.name.c_str());
  nodes_.push_back(Node{p.value, {}, {}, p.trainable ? &p : nullptr, p.trainable});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), op);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op) {
  bool needs_grad = false;
  for (const Var& v : inputs) {
    check_owned(v);
    needs_grad = needs_grad || nodes_[v.id()].requires_grad;
  }
  require_finite(value, op);
  Node node{std::move(value), {}, {}, nullptr, needs_grad};
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument("variable is not recorded on this tape");
  }
}

void Tape::backward(Var root) {
  check_owned(root);
  Node& r = nodes_[root.id()];
  if (!r.requires_grad) throw std::invalid_argument("backward on a node that does not require grad");
  for (Node& n : nodes_) n.grad = Tensor();
  r.grad = Tensor(r.value.shape(), 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.value, n.grad);
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (!n.requires_grad) throw std::invalid_argument("node does not require grad");
  // Untouched by the last backward pass: the gradient is identically zero.
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor* Tape::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
}

}  // namespace mantra
