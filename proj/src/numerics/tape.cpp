#include "fedtrans/numerics/tape.hpp"

#include "fedtrans/errors.hpp"

namespace fedtrans::numerics {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string path, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, std::move(path)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("op mixes variables from different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node node{std::move(value), {}, needs, {}, std::nullopt};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

GradientMap Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  grad(loss.id())[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    // The closure may touch other nodes' buffers; this node's own entry is stable
    // because nothing is appended during the reverse sweep.
    node.backward(*this, node.grad);
  }

  GradientMap grads;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (!node.parameter_path) continue;
    Tensor g = node.grad.empty() ? Tensor(node.value.shape(), 0.0) : node.grad;
    auto [it, inserted] = grads.try_emplace(*node.parameter_path, g);
    if (!inserted) {
      require_same_shape(it->second, g, "duplicate parameter registration");
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return grads;
}

}  // namespace fedtrans::numerics
