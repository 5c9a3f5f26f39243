#include "selfsim/tape.hpp"

#include <string>
#include <utility>

#include "selfsim/errors.hpp"

namespace selfsim::ad {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::conv: return "conv";
    case OpKind::block_expand: return "block_expand";
    case OpKind::affine: return "affine";
    case OpKind::channel_bias: return "channel_bias";
    case OpKind::activation: return "activation";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::scale: return "scale";
    case OpKind::reshape: return "reshape";
    case OpKind::slice: return "slice";
    case OpKind::mse: return "mse";
  }
  return "unknown";
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, std::move(value), {}, false, {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{OpKind::parameter, std::move(value), {}, true, {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw UsageError("tape input refers to a node that does not exist yet");
    needs = needs || nodes_[in.id].requires_grad;
  }
  if (!needs) {
    inputs.clear();
    backward = nullptr;
  }
  nodes_.push_back(Node{kind, std::move(value), std::move(inputs), needs, std::move(backward), {}, false});
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("invalid tape variable");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("invalid tape variable");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v).kind; }
std::span<const Var> Tape::inputs(Var v) const { return node(v).inputs; }

void Tape::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + selfsim::to_string(root.value.shape()));
  }
  for (auto& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  if (!root.requires_grad) return;
  Node& r = node(loss);
  r.grad = Tensor(r.value.shape(), 1.0);
  r.has_grad = true;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // copy: the callback may grow other nodes' buffers but never this one
    const Tensor g = n.grad;
    n.backward(*this, g);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

Tensor* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Tensor* buf = grad_buffer(v);
  if (!buf) return;
  require_same_shape(*buf, g, "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
}

Var conv_circular(Tape& tape, Var input, Var kernel, std::vector<std::size_t> stride) {
  Tensor out = selfsim::conv_circular(tape.value(input), tape.value(kernel), stride);
  return tape.record(OpKind::conv, std::move(out), {input, kernel},
                     [input, kernel, stride](Tape& t, const Tensor& g) {
                       selfsim::conv_circular_backward(t.value(input), t.value(kernel), stride, g,
                                                       t.grad_buffer(input), t.grad_buffer(kernel));
                     });
}

Var block_expand(Tape& tape, Var input, Var weight, Var bias) {
  Tensor out = selfsim::block_expand(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.record(OpKind::block_expand, std::move(out), {input, weight, bias},
                     [input, weight, bias](Tape& t, const Tensor& g) {
                       selfsim::block_expand_backward(t.value(input), t.value(weight), g,
                                                      t.grad_buffer(input), t.grad_buffer(weight),
                                                      t.grad_buffer(bias));
                     });
}

Var affine(Tape& tape, Var input, Var weight, Var bias) {
  Tensor out = selfsim::affine(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.record(OpKind::affine, std::move(out), {input, weight, bias},
                     [input, weight, bias](Tape& t, const Tensor& g) {
                       selfsim::affine_backward(t.value(input), t.value(weight), g, t.grad_buffer(input),
                                                t.grad_buffer(weight), t.grad_buffer(bias));
                     });
}

Var add_channel_bias(Tape& tape, Var input, Var bias) {
  Tensor out = selfsim::add_channel_bias(tape.value(input), tape.value(bias));
  return tape.record(OpKind::channel_bias, std::move(out), {input, bias},
                     [input, bias](Tape& t, const Tensor& g) {
                       t.accumulate(input, g);
                       if (Tensor* gb = t.grad_buffer(bias)) {
                         const auto& shape = g.shape();
                         const std::size_t sites = g.size() / (shape[0] * shape[1]);
                         for (std::size_t b = 0; b < shape[0]; ++b) {
                           for (std::size_t c = 0; c < shape[1]; ++c) {
                             double acc = 0.0;
                             const double* src = g.data() + (b * shape[1] + c) * sites;
                             for (std::size_t s = 0; s < sites; ++s) acc += src[s];
                             (*gb)[c] += acc;
                           }
                         }
                       }
                     });
}

Var activation(Tape& tape, Var input, Activation kind) {
  Tensor out = selfsim::activate(tape.value(input), kind);
  const std::size_t self = tape.size();
  return tape.record(OpKind::activation, std::move(out), {input},
                     [input, kind, self](Tape& t, const Tensor& g) {
                       t.accumulate(input, selfsim::activation_backward(t.value(input), t.value(Var{self}),
                                                                        kind, g));
                     });
}

Var add(Tape& tape, Var a, Var b) {
  Tensor out = selfsim::add(tape.value(a), tape.value(b));
  return tape.record(OpKind::add, std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Tape& tape, Var a, Var b) {
  Tensor out = selfsim::sub(tape.value(a), tape.value(b));
  return tape.record(OpKind::sub, std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, selfsim::scale(g, -1.0));
  });
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = selfsim::scale(tape.value(a), factor);
  return tape.record(OpKind::scale, std::move(out), {a},
                     [a, factor](Tape& t, const Tensor& g) { t.accumulate(a, selfsim::scale(g, factor)); });
}

Var reshape(Tape& tape, Var a, Shape shape) {
  Tensor out = tape.value(a).reshaped(std::move(shape));
  return tape.record(OpKind::reshape, std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, g.reshaped(t.value(a).shape()));
  });
}

Var slice_axis(Tape& tape, Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tensor out = selfsim::slice_axis(tape.value(a), axis, begin, end);
  return tape.record(OpKind::slice, std::move(out), {a}, [a, axis, begin](Tape& t, const Tensor& g) {
    if (Tensor* buf = t.grad_buffer(a)) selfsim::slice_axis_backward(g, axis, begin, *buf);
  });
}

Var mse(Tape& tape, Var a, Var b) {
  const double value = selfsim::mse(tape.value(a), tape.value(b));
  return tape.record(OpKind::mse, Tensor::scalar(value), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    const double factor = 2.0 * g.item() / static_cast<double>(va.size());
    Tensor d(va.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = factor * (va[i] - vb[i]);
    t.accumulate(a, d);
    t.accumulate(b, selfsim::scale(d, -1.0));
  });
}

}  // namespace selfsim::ad
