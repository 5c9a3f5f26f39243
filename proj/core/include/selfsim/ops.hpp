#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "selfsim/tensor.hpp"

namespace selfsim {

enum class Activation { identity, sigmoid, relu };

/// Throws ConfigError for names other than identity/sigmoid/relu.
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

// Value-level kernels. The graph versions in tape.hpp call these, so inference
// and training share one code path. All reductions run in a fixed sequential
// order so results are bitwise reproducible.

/// Circular (periodic) convolution over 1 to 3 lattice axes.
///
/// input  `[batch, c_in, a_0, ..., a_{k-1}]`
/// kernel `[c_out, c_in, k_0, ..., k_{k-1}]`
/// output `[batch, c_out, a_0 / s_0, ...]`
///
/// Output site `o` reads input sites `o * s + j - origin` (mod extent) for
/// kernel offsets `j`. The origin is `(k - 1) / 2` on stride-1 axes, so odd
/// kernels are centred, and 0 on strided axes, so a kernel with extent equal
/// to its stride tiles the lattice into disjoint blocks.
Tensor conv_circular(const Tensor& input, const Tensor& kernel, std::span<const std::size_t> stride);

/// Accumulates input/kernel gradients of conv_circular. Either output pointer
/// may be null; non-null outputs must already have the right shape.
void conv_circular_backward(const Tensor& input, const Tensor& kernel,
                            std::span<const std::size_t> stride, const Tensor& grad_output,
                            Tensor* grad_input, Tensor* grad_kernel);

/// Block-wise transposed convolution: every input site expands into its own
/// disjoint `k_0 x ... x k_{k-1}` block.
///
/// input  `[batch, c_in, y_0, ...]`
/// weight `[c_in, c_out, k_0, ...]`
/// bias   `[c_out, k_0, ...]` (one bias per position inside the block)
/// output `[batch, c_out, y_0 * k_0, ...]`
Tensor block_expand(const Tensor& input, const Tensor& weight, const Tensor& bias);

void block_expand_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                           Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias);

/// Per-site channel mixing: `out[b, o, s] = sum_i in[b, i, s] * w[i, o] + bias[o]`.
/// A rank-1 input is treated as a single feature vector.
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

void affine_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                     Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias);

/// Adds `bias[c]` to every site of channel `c` of a `[batch, c, ...]` tensor.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

Tensor activate(const Tensor& input, Activation kind);

/// Gradient through an activation given its input and output.
Tensor activation_backward(const Tensor& input, const Tensor& output, Activation kind,
                           const Tensor& grad_output);

/// Entries `[begin, end)` along `axis`, all other axes kept.
Tensor slice_axis(const Tensor& input, std::size_t axis, std::size_t begin, std::size_t end);

/// Adds `grad_output` of slice_axis into the matching region of `grad_input`.
void slice_axis_backward(const Tensor& grad_output, std::size_t axis, std::size_t begin, Tensor& grad_input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Mean of squared differences. Symmetric, non-negative, exactly 0 for a == b.
double mse(const Tensor& a, const Tensor& b);

}  // namespace selfsim
