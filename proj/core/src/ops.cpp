#include "selfsim/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "selfsim/errors.hpp"

namespace selfsim {

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected identity, sigmoid or relu)");
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  throw ConfigError("invalid activation value");
}

namespace {

constexpr std::size_t kMaxAxes = 3;

// Spatial axes padded to three so every kernel runs the same loop nest.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::array<std::size_t, kMaxAxes> in{1, 1, 1};
  std::array<std::size_t, kMaxAxes> k{1, 1, 1};
  std::array<std::size_t, kMaxAxes> out{1, 1, 1};
  // index[a][o * k[a] + j] = input coordinate read by output o at offset j
  std::array<std::vector<std::size_t>, kMaxAxes> index;

  std::size_t in_sites() const { return in[0] * in[1] * in[2]; }
  std::size_t out_sites() const { return out[0] * out[1] * out[2]; }
  std::size_t k_sites() const { return k[0] * k[1] * k[2]; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel,
                           std::span<const std::size_t> stride) {
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (is.size() < 3 || is.size() > 2 + kMaxAxes) {
    throw DimensionError("conv_circular: input must be [batch, channels, 1-3 axes], got " + to_string(is));
  }
  const std::size_t axes = is.size() - 2;
  if (ks.size() != is.size()) {
    throw DimensionError("conv_circular: kernel " + to_string(ks) + " does not match input " + to_string(is));
  }
  if (ks[1] != is[1]) {
    throw DimensionError("conv_circular: kernel " + to_string(ks) + " expects " + std::to_string(ks[1]) +
                         " input channels, input " + to_string(is) + " has " + std::to_string(is[1]));
  }
  if (stride.size() != axes) {
    throw ConfigError("conv_circular: " + std::to_string(stride.size()) + " strides for " +
                      std::to_string(axes) + " axes");
  }
  ConvGeometry g;
  g.batch = is[0];
  g.c_in = is[1];
  g.c_out = ks[0];
  const std::size_t pad = kMaxAxes - axes;
  for (std::size_t a = 0; a < axes; ++a) {
    const std::size_t extent = is[2 + a];
    const std::size_t kext = ks[2 + a];
    const std::size_t s = stride[a];
    if (kext > extent) {
      throw DimensionError("conv_circular: kernel " + to_string(ks) + " exceeds input " + to_string(is));
    }
    if (s == 0 || extent % s != 0) {
      throw ConfigError("conv_circular: stride " + std::to_string(s) + " does not divide extent " +
                        std::to_string(extent) + " on axis " + std::to_string(a));
    }
    g.in[pad + a] = extent;
    g.k[pad + a] = kext;
    g.out[pad + a] = extent / s;
  }
  for (std::size_t a = 0; a < kMaxAxes; ++a) {
    const std::size_t s = a < pad ? 1 : stride[a - pad];
    const std::size_t origin = s == 1 ? (g.k[a] - 1) / 2 : 0;
    auto& idx = g.index[a];
    idx.resize(g.out[a] * g.k[a]);
    for (std::size_t o = 0; o < g.out[a]; ++o) {
      for (std::size_t j = 0; j < g.k[a]; ++j) {
        // add in[a] before subtracting the origin to stay unsigned
        idx[o * g.k[a] + j] = (o * s + j + g.in[a] - origin) % g.in[a];
      }
    }
  }
  return g;
}

Shape conv_output_shape(const Tensor& input, const ConvGeometry& g) {
  Shape shape{g.batch, g.c_out};
  const std::size_t axes = input.rank() - 2;
  for (std::size_t a = kMaxAxes - axes; a < kMaxAxes; ++a) shape.push_back(g.out[a]);
  return shape;
}

}  // namespace

Tensor conv_circular(const Tensor& input, const Tensor& kernel, std::span<const std::size_t> stride) {
  const ConvGeometry g = conv_geometry(input, kernel, stride);
  Tensor out(conv_output_shape(input, g));
  const std::size_t in_sites = g.in_sites();
  const std::size_t out_sites = g.out_sites();
  const double* in = input.data();
  const double* w = kernel.data();
  double* o = out.data();
  const auto& i0 = g.index[0];
  const auto& i1 = g.index[1];
  const auto& i2 = g.index[2];

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      double* plane = o + (b * g.c_out + co) * out_sites;
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const double* src = in + (b * g.c_in + ci) * in_sites;
        const double* wk = w + (co * g.c_in + ci) * g.k_sites();
        for (std::size_t j0 = 0; j0 < g.k[0]; ++j0) {
          for (std::size_t j1 = 0; j1 < g.k[1]; ++j1) {
            for (std::size_t j2 = 0; j2 < g.k[2]; ++j2) {
              const double wv = wk[(j0 * g.k[1] + j1) * g.k[2] + j2];
              for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                const std::size_t r0 = i0[o0 * g.k[0] + j0] * g.in[1];
                for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                  const double* row = src + (r0 + i1[o1 * g.k[1] + j1]) * g.in[2];
                  double* dst = plane + (o0 * g.out[1] + o1) * g.out[2];
                  for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) {
                    dst[o2] += wv * row[i2[o2 * g.k[2] + j2]];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv_circular_backward(const Tensor& input, const Tensor& kernel,
                            std::span<const std::size_t> stride, const Tensor& grad_output,
                            Tensor* grad_input, Tensor* grad_kernel) {
  const ConvGeometry g = conv_geometry(input, kernel, stride);
  if (grad_output.shape() != conv_output_shape(input, g)) {
    throw DimensionError("conv_circular_backward: gradient shape " + to_string(grad_output.shape()));
  }
  const std::size_t in_sites = g.in_sites();
  const std::size_t out_sites = g.out_sites();
  const auto& i0 = g.index[0];
  const auto& i1 = g.index[1];
  const auto& i2 = g.index[2];
  const double* in = input.data();
  const double* w = kernel.data();
  const double* go = grad_output.data();
  double* gi = grad_input ? grad_input->data() : nullptr;
  double* gw = grad_kernel ? grad_kernel->data() : nullptr;

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* gplane = go + (b * g.c_out + co) * out_sites;
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const std::size_t src_off = (b * g.c_in + ci) * in_sites;
        const std::size_t k_off = (co * g.c_in + ci) * g.k_sites();
        for (std::size_t j0 = 0; j0 < g.k[0]; ++j0) {
          for (std::size_t j1 = 0; j1 < g.k[1]; ++j1) {
            for (std::size_t j2 = 0; j2 < g.k[2]; ++j2) {
              const std::size_t kidx = k_off + (j0 * g.k[1] + j1) * g.k[2] + j2;
              const double wv = w[kidx];
              double acc = 0.0;
              for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
                const std::size_t r0 = i0[o0 * g.k[0] + j0] * g.in[1];
                for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
                  const std::size_t row = src_off + (r0 + i1[o1 * g.k[1] + j1]) * g.in[2];
                  const double* grow = gplane + (o0 * g.out[1] + o1) * g.out[2];
                  for (std::size_t o2 = 0; o2 < g.out[2]; ++o2) {
                    const std::size_t at = row + i2[o2 * g.k[2] + j2];
                    if (gw) acc += grow[o2] * in[at];
                    if (gi) gi[at] += wv * grow[o2];
                  }
                }
              }
              if (gw) gw[kidx] += acc;
            }
          }
        }
      }
    }
  }
}

namespace {

struct ExpandGeometry {
  std::size_t batch = 0;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::array<std::size_t, kMaxAxes> in{1, 1, 1};
  std::array<std::size_t, kMaxAxes> k{1, 1, 1};
  Shape out_shape;

  std::size_t in_sites() const { return in[0] * in[1] * in[2]; }
  std::size_t k_sites() const { return k[0] * k[1] * k[2]; }
};

ExpandGeometry expand_geometry(const Tensor& input, const Tensor& weight) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (is.size() < 3 || is.size() > 2 + kMaxAxes || ws.size() != is.size()) {
    throw DimensionError("block_expand: input " + to_string(is) + " and weight " + to_string(ws) +
                         " must be [batch, c_in, axes...] and [c_in, c_out, block...]");
  }
  if (ws[0] != is[1]) {
    throw DimensionError("block_expand: weight " + to_string(ws) + " does not match input channels of " +
                         to_string(is));
  }
  ExpandGeometry g;
  g.batch = is[0];
  g.c_in = is[1];
  g.c_out = ws[1];
  g.out_shape = {g.batch, g.c_out};
  const std::size_t axes = is.size() - 2;
  const std::size_t pad = kMaxAxes - axes;
  for (std::size_t a = 0; a < axes; ++a) {
    g.in[pad + a] = is[2 + a];
    g.k[pad + a] = ws[2 + a];
    g.out_shape.push_back(is[2 + a] * ws[2 + a]);
  }
  return g;
}

void check_block_bias(const Tensor& bias, const Tensor& weight) {
  Shape expect(weight.shape().begin() + 1, weight.shape().end());
  if (bias.shape() != expect) {
    throw DimensionError("block_expand: bias " + to_string(bias.shape()) + " expected " + to_string(expect));
  }
}

}  // namespace

Tensor block_expand(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const ExpandGeometry g = expand_geometry(input, weight);
  check_block_bias(bias, weight);
  Tensor out(g.out_shape);
  const std::size_t in_sites = g.in_sites();
  const std::size_t ks = g.k_sites();
  const std::size_t o1 = g.in[1] * g.k[1];
  const std::size_t o2 = g.in[2] * g.k[2];
  const double* in = input.data();
  const double* w = weight.data();
  const double* bv = bias.data();
  double* out_p = out.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      double* plane = out_p + (b * g.c_out + co) * in_sites * ks;
      for (std::size_t y0 = 0; y0 < g.in[0]; ++y0) {
        for (std::size_t y1 = 0; y1 < g.in[1]; ++y1) {
          for (std::size_t y2 = 0; y2 < g.in[2]; ++y2) {
            const std::size_t site = (y0 * g.in[1] + y1) * g.in[2] + y2;
            for (std::size_t j0 = 0; j0 < g.k[0]; ++j0) {
              for (std::size_t j1 = 0; j1 < g.k[1]; ++j1) {
                for (std::size_t j2 = 0; j2 < g.k[2]; ++j2) {
                  const std::size_t j = (j0 * g.k[1] + j1) * g.k[2] + j2;
                  double acc = bv[co * ks + j];
                  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                    acc += in[(b * g.c_in + ci) * in_sites + site] * w[(ci * g.c_out + co) * ks + j];
                  }
                  const std::size_t x0 = y0 * g.k[0] + j0;
                  const std::size_t x1 = y1 * g.k[1] + j1;
                  const std::size_t x2 = y2 * g.k[2] + j2;
                  plane[(x0 * o1 + x1) * o2 + x2] = acc;
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void block_expand_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                           Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias) {
  const ExpandGeometry g = expand_geometry(input, weight);
  if (grad_output.shape() != g.out_shape) {
    throw DimensionError("block_expand_backward: gradient shape " + to_string(grad_output.shape()));
  }
  const std::size_t in_sites = g.in_sites();
  const std::size_t ks = g.k_sites();
  const std::size_t o1 = g.in[1] * g.k[1];
  const std::size_t o2 = g.in[2] * g.k[2];
  const double* in = input.data();
  const double* w = weight.data();
  const double* go = grad_output.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* plane = go + (b * g.c_out + co) * in_sites * ks;
      for (std::size_t y0 = 0; y0 < g.in[0]; ++y0) {
        for (std::size_t y1 = 0; y1 < g.in[1]; ++y1) {
          for (std::size_t y2 = 0; y2 < g.in[2]; ++y2) {
            const std::size_t site = (y0 * g.in[1] + y1) * g.in[2] + y2;
            for (std::size_t j0 = 0; j0 < g.k[0]; ++j0) {
              for (std::size_t j1 = 0; j1 < g.k[1]; ++j1) {
                for (std::size_t j2 = 0; j2 < g.k[2]; ++j2) {
                  const std::size_t j = (j0 * g.k[1] + j1) * g.k[2] + j2;
                  const std::size_t x0 = y0 * g.k[0] + j0;
                  const std::size_t x1 = y1 * g.k[1] + j1;
                  const std::size_t x2 = y2 * g.k[2] + j2;
                  const double gv = plane[(x0 * o1 + x1) * o2 + x2];
                  if (grad_bias) (*grad_bias)[co * ks + j] += gv;
                  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                    const std::size_t at = (b * g.c_in + ci) * in_sites + site;
                    const std::size_t wi = (ci * g.c_out + co) * ks + j;
                    if (grad_weight) (*grad_weight)[wi] += gv * in[at];
                    if (grad_input) (*grad_input)[at] += gv * w[wi];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

namespace {

struct AffineGeometry {
  std::size_t batch = 1;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t sites = 1;
  Shape out_shape;
};

AffineGeometry affine_geometry(const Tensor& input, const Tensor& weight) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (ws.size() != 2 || is.empty()) {
    throw DimensionError("affine: weight must be [c_in, c_out], got " + to_string(ws) + " for input " +
                         to_string(is));
  }
  AffineGeometry g;
  if (is.size() == 1) {
    g.c_in = is[0];
  } else {
    g.batch = is[0];
    g.c_in = is[1];
    for (std::size_t a = 2; a < is.size(); ++a) g.sites *= is[a];
  }
  if (ws[0] != g.c_in) {
    throw DimensionError("affine: input " + to_string(is) + " has " + std::to_string(g.c_in) +
                         " features, weight " + to_string(ws) + " expects " + std::to_string(ws[0]));
  }
  g.c_out = ws[1];
  g.out_shape = is;
  g.out_shape[is.size() == 1 ? 0 : 1] = g.c_out;
  return g;
}

}  // namespace

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const AffineGeometry g = affine_geometry(input, weight);
  if (bias.shape() != Shape{g.c_out}) {
    throw DimensionError("affine: bias " + to_string(bias.shape()) + " expected [" + std::to_string(g.c_out) + "]");
  }
  Tensor out(g.out_shape);
  const double* in = input.data();
  const double* w = weight.data();
  double* o = out.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      double* dst = o + (b * g.c_out + co) * g.sites;
      for (std::size_t s = 0; s < g.sites; ++s) dst[s] = bias[co];
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const double wv = w[ci * g.c_out + co];
        const double* src = in + (b * g.c_in + ci) * g.sites;
        for (std::size_t s = 0; s < g.sites; ++s) dst[s] += src[s] * wv;
      }
    }
  }
  return out;
}

void affine_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                     Tensor* grad_input, Tensor* grad_weight, Tensor* grad_bias) {
  const AffineGeometry g = affine_geometry(input, weight);
  require_same_shape(grad_output, Tensor(g.out_shape), "affine_backward");
  const double* in = input.data();
  const double* w = weight.data();
  const double* go = grad_output.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* gsrc = go + (b * g.c_out + co) * g.sites;
      if (grad_bias) {
        double acc = 0.0;
        for (std::size_t s = 0; s < g.sites; ++s) acc += gsrc[s];
        (*grad_bias)[co] += acc;
      }
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const std::size_t in_off = (b * g.c_in + ci) * g.sites;
        if (grad_weight) {
          double acc = 0.0;
          for (std::size_t s = 0; s < g.sites; ++s) acc += gsrc[s] * in[in_off + s];
          (*grad_weight)[ci * g.c_out + co] += acc;
        }
        if (grad_input) {
          const double wv = w[ci * g.c_out + co];
          double* gi = grad_input->data() + in_off;
          for (std::size_t s = 0; s < g.sites; ++s) gi[s] += gsrc[s] * wv;
        }
      }
    }
  }
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  const auto& is = input.shape();
  if (is.size() < 2 || bias.shape() != Shape{is[1]}) {
    throw DimensionError("add_channel_bias: bias " + to_string(bias.shape()) + " for input " + to_string(is));
  }
  Tensor out = input;
  const std::size_t sites = input.size() / (is[0] * is[1]);
  double* o = out.data();
  for (std::size_t b = 0; b < is[0]; ++b) {
    for (std::size_t c = 0; c < is[1]; ++c) {
      double* dst = o + (b * is[1] + c) * sites;
      for (std::size_t s = 0; s < sites; ++s) dst[s] += bias[c];
    }
  }
  return out;
}

namespace {

struct SliceGeometry {
  std::size_t outer = 1;
  std::size_t inner = 1;
};

SliceGeometry slice_geometry(const Shape& shape, std::size_t axis) {
  SliceGeometry g;
  for (std::size_t a = 0; a < axis; ++a) g.outer *= shape[a];
  for (std::size_t a = axis + 1; a < shape.size(); ++a) g.inner *= shape[a];
  return g;
}

}  // namespace

Tensor slice_axis(const Tensor& input, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& is = input.shape();
  if (axis >= is.size() || begin >= end || end > is[axis]) {
    throw DimensionError("slice_axis: [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + to_string(is));
  }
  Shape os = is;
  os[axis] = end - begin;
  Tensor out(os);
  const auto g = slice_geometry(is, axis);
  const std::size_t len = (end - begin) * g.inner;
  for (std::size_t o = 0; o < g.outer; ++o) {
    std::copy_n(input.data() + (o * is[axis] + begin) * g.inner, len, out.data() + o * len);
  }
  return out;
}

void slice_axis_backward(const Tensor& grad_output, std::size_t axis, std::size_t begin, Tensor& grad_input) {
  const auto& is = grad_input.shape();
  const auto g = slice_geometry(is, axis);
  const std::size_t count = grad_output.shape()[axis];
  const std::size_t len = count * g.inner;
  for (std::size_t o = 0; o < g.outer; ++o) {
    double* dst = grad_input.data() + (o * is[axis] + begin) * g.inner;
    const double* src = grad_output.data() + o * len;
    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
  }
}

Tensor activate(const Tensor& input, Activation kind) {
  Tensor out = input;
  switch (kind) {
    case Activation::identity:
      break;
    case Activation::sigmoid:
      for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::relu:
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      break;
  }
  return out;
}

Tensor activation_backward(const Tensor& input, const Tensor& output, Activation kind,
                           const Tensor& grad_output) {
  Tensor g = grad_output;
  switch (kind) {
    case Activation::identity:
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (1.0 - output[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = input[i] > 0.0 ? g[i] : 0.0;
      break;
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.values()) v *= factor;
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace selfsim
