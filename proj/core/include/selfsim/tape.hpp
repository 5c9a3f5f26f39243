#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "selfsim/ops.hpp"
#include "selfsim/tensor.hpp"

namespace selfsim::ad {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

enum class OpKind {
  constant,
  parameter,
  conv,
  block_expand,
  affine,
  channel_bias,
  activation,
  add,
  sub,
  scale,
  reshape,
  slice,
  mse,
};

std::string_view to_string(OpKind kind);

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order of the graph. Nodes whose inputs never require a
/// gradient store only their value.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const Var> inputs(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Populates gradients of `loss` (a single-element node) with respect to
  /// every node that requires one. Calling it again recomputes from scratch.
  void backward(Var loss);

  /// Gradient after backward(). Zero-filled for nodes the loss does not
  /// depend on, including detached leaves.
  Tensor grad(Var v) const;

  /// Adds `g` into the gradient buffer of `v`, if `v` requires a gradient.
  void accumulate(Var v, const Tensor& g);
  Tensor* grad_buffer(Var v);

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<Var> inputs;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor grad;
    bool has_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

// Graph operations. Each records one node and mirrors the value-level kernel
// of the same name in ops.hpp.

Var conv_circular(Tape& tape, Var input, Var kernel, std::vector<std::size_t> stride);
Var block_expand(Tape& tape, Var input, Var weight, Var bias);
Var affine(Tape& tape, Var input, Var weight, Var bias);
Var add_channel_bias(Tape& tape, Var input, Var bias);
Var activation(Tape& tape, Var input, Activation kind);
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var reshape(Tape& tape, Var a, Shape shape);
Var slice_axis(Tape& tape, Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var mse(Tape& tape, Var a, Var b);

}  // namespace selfsim::ad
