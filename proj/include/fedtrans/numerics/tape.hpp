#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedtrans/numerics/tensor.hpp"

namespace fedtrans::numerics {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of the loss with respect to each tracked parameter, keyed by path.
using GradientMap = ParameterSet;

/// Records a forward computation so that reverse-mode gradients can be replayed.
///
/// Nodes are appended in topological order by construction; backward walks them
/// in reverse. Nodes whose inputs carry no tracked parameter skip their backward
/// closure entirely, which is what keeps frozen parameter sets free of gradient
/// work during the alternating phases. A tape is confined to one thread.
class Tape {
 public:
  /// Receives the accumulated output gradient; pushes contributions to inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// A tracked leaf. Registering the same path twice sums the gradients.
  Var parameter(std::string path, Tensor value);

  /// Appends an op output. `fn` runs only if some input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  Tensor& grad(std::size_t id);

  /// Runs reverse accumulation from a single-element loss node.
  /// Every parameter registered on the tape appears in the result; the ones not
  /// on any path to the loss get exact zeros.
  GradientMap backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<std::string> parameter_path;
  };

  std::vector<Node> nodes_;
};

}  // namespace fedtrans::numerics
