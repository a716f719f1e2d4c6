#pragma once

#include "mdet/tensor.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mdet {

/// Raised when an operation is used outside its contract (e.g. backward on a
/// non-scalar loss).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int index) : tape_(tape), index_(index) {}

  Tape<Scalar>* tape() const { return tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int index_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the index
/// order is a topological order and backward() walks it in reverse.
///
/// Each node keeps its forward rule, which lets replay() re-evaluate the whole
/// graph after leaf values change. A tape has a single writer.
template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  using Inputs = std::span<const TensorT* const>;
  using GradInputs = std::span<TensorT* const>;
  using ForwardFn = std::function<TensorT(Inputs)>;
  /// Accumulates (+=) into every non-null entry of grad_inputs.
  using BackwardFn =
      std::function<void(Inputs inputs, const TensorT& output, const TensorT& grad_output, GradInputs grad_inputs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> variable(TensorT value) { return push_leaf(std::move(value), true); }
  Var<Scalar> constant(TensorT value) { return push_leaf(std::move(value), false); }

  Var<Scalar> record(const std::vector<Var<Scalar>>& inputs, ForwardFn forward, BackwardFn backward) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const auto& v : inputs) {
      if (v.tape() != this) throw ContractViolation("tape: input recorded on a different tape");
      node.inputs.push_back(v.index());
      node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(v.index())].requires_grad;
    }
    node.forward = std::move(forward);
    node.backward = std::move(backward);
    node.value = node.forward(gather_inputs(node));
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const TensorT& value(Var<Scalar> v) const { return at(v).value; }

  /// Gradient from the most recent backward(); zeros if none reached v.
  TensorT grad(Var<Scalar> v) const {
    const Node& n = at(v);
    return n.grad.size() == n.value.size() && n.has_grad ? n.grad : TensorT(n.value.shape());
  }

  bool requires_grad(Var<Scalar> v) const { return at(v).requires_grad; }

  /// Replace the value of a leaf; call replay() to refresh dependents.
  void set_value(Var<Scalar> leaf, TensorT value) {
    Node& n = at(leaf);
    if (n.forward) throw ContractViolation("tape: set_value on a non-leaf node");
    if (value.shape() != n.value.shape()) {
      throw DimensionError("tape: set_value shape " + shape_string(value.shape()) + " != " +
                           shape_string(n.value.shape()));
    }
    n.value = std::move(value);
  }

  void replay() {
    for (auto& n : nodes_) {
      if (n.forward) n.value = n.forward(gather_inputs(n));
    }
  }

  void backward(Var<Scalar> loss) {
    if (at(loss).value.size() != 1) {
      throw ContractViolation("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    backward(loss, TensorT::constant(loss.shape(), Scalar(1)));
  }

  /// Vector-Jacobian product: propagates `seed` (shaped like `output`).
  void backward(Var<Scalar> output, const TensorT& seed) {
    const Node& out = at(output);
    if (seed.shape() != out.value.shape()) {
      throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " != output shape " +
                           shape_string(out.value.shape()));
    }
    const auto last = static_cast<std::size_t>(output.index());
    for (std::size_t i = 0; i <= last; ++i) {
      Node& n = nodes_[i];
      n.has_grad = false;
      if (n.requires_grad) {
        if (n.grad.shape() != n.value.shape()) n.grad = TensorT(n.value.shape());
        else n.grad.array().setZero();
      }
    }
    if (!out.requires_grad) return;
    nodes_[last].grad = seed;
    nodes_[last].has_grad = true;

    std::vector<TensorT*> grad_ptrs;
    for (std::size_t k = last + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      grad_ptrs.assign(n.inputs.size(), nullptr);
      for (std::size_t j = 0; j < n.inputs.size(); ++j) {
        Node& in = nodes_[static_cast<std::size_t>(n.inputs[j])];
        if (in.requires_grad) {
          grad_ptrs[j] = &in.grad;
          in.has_grad = true;
        }
      }
      n.backward(gather_inputs(n), n.value, n.grad, GradInputs(grad_ptrs.data(), grad_ptrs.size()));
    }
  }

  std::size_t size() const { return nodes_.size(); }

  /// Bytes held by recorded values and gradient buffers.
  std::size_t memory_bytes() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) {
      total += static_cast<std::size_t>(n.value.size() + (n.requires_grad ? n.value.size() : 0)) * sizeof(Scalar);
    }
    return total;
  }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    std::vector<int> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var<Scalar> push_leaf(TensorT value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Node& at(Var<Scalar> v) {
    if (v.tape() != this || v.index() < 0 || static_cast<std::size_t>(v.index()) >= nodes_.size()) {
      throw ContractViolation("tape: variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.index())];
  }
  const Node& at(Var<Scalar> v) const { return const_cast<Tape*>(this)->at(v); }

  Inputs gather_inputs(const Node& n) {
    scratch_.clear();
    for (int idx : n.inputs) scratch_.push_back(&nodes_[static_cast<std::size_t>(idx)].value);
    return Inputs(scratch_.data(), scratch_.size());
  }

  std::vector<Node> nodes_;
  std::vector<const TensorT*> scratch_;
};

}  // namespace mdet
