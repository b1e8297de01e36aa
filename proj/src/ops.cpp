#include "radiodx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "radiodx/errors.hpp"

namespace radiodx::ops {

using radiodx::to_string;

Padding parse_padding(std::string_view name) {
  if (name == "same") return Padding::same;
  if (name == "valid") return Padding::valid;
  throw ArgumentError("unknown padding '" + std::string(name) + "'");
}

std::string_view to_string(Padding padding) {
  return padding == Padding::same ? "same" : "valid";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation kind) {
  return kind == Activation::relu ? "relu" : "sigmoid";
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

struct ConvGeometry {
  std::size_t c_in, height, width;
  std::size_t c_out, k_h, k_w;
  std::size_t out_h, out_w;
  std::ptrdiff_t pad_h, pad_w;

  // Output columns whose input column ox + kx - pad_w is in range.
  std::size_t col_lo(std::size_t kx) const {
    const auto lo = pad_w - static_cast<std::ptrdiff_t>(kx);
    return lo > 0 ? static_cast<std::size_t>(lo) : 0;
  }
  std::size_t col_hi(std::size_t kx) const {
    const auto hi = static_cast<std::ptrdiff_t>(width) + pad_w - static_cast<std::ptrdiff_t>(kx);
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi, 0, out_w));
  }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weights, const Shape& bias,
                           Padding padding) {
  if (input.size() != 3 || weights.size() != 4 || weights[1] != input[0]) {
    shape_mismatch("conv2d", input, weights);
  }
  if (bias.size() != 1 || bias[0] != weights[0]) shape_mismatch("conv2d", weights, bias);
  ConvGeometry g{input[0], input[1], input[2], weights[0], weights[2], weights[3], 0, 0, 0, 0};
  if (padding == Padding::same) {
    if (g.k_h % 2 == 0 || g.k_w % 2 == 0) {
      throw ShapeError("conv2d: 'same' padding needs odd kernel dims, got " + to_string(weights));
    }
    g.out_h = g.height;
    g.out_w = g.width;
    g.pad_h = static_cast<std::ptrdiff_t>(g.k_h / 2);
    g.pad_w = static_cast<std::ptrdiff_t>(g.k_w / 2);
  } else {
    if (g.k_h > g.height || g.k_w > g.width) shape_mismatch("conv2d", input, weights);
    g.out_h = g.height - g.k_h + 1;
    g.out_w = g.width - g.k_w + 1;
  }
  return g;
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& weights, const Shape& bias,
                          Padding padding) {
  const auto g = conv_geometry(input, weights, bias, padding);
  return {g.c_out, g.out_h, g.out_w};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, Padding padding) {
  const auto g = conv_geometry(input.shape(), weights.shape(), bias.shape(), padding);
  BasicTensor<T> out({g.c_out, g.out_h, g.out_w});
  const std::size_t plane = g.out_h * g.out_w;
  const T* in = input.data().data();
  const T* w = weights.data().data();
  T* o = out.data().data();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    T* out_plane = o + co * plane;
    std::fill(out_plane, out_plane + plane, bias[co]);
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const T* in_plane = in + ci * g.height * g.width;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const T wv = w[((co * g.c_in + ci) * g.k_h + ky) * g.k_w + kx];
          const std::size_t lo = g.col_lo(kx), hi = g.col_hi(kx);
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - g.pad_w;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - g.pad_h;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            const T* in_row = in_plane + static_cast<std::size_t>(iy) * g.width;
            T* out_row = out_plane + oy * g.out_w;
            for (std::size_t ox = lo; ox < hi; ++ox) {
              out_row[ox] += wv * in_row[static_cast<std::ptrdiff_t>(ox) + shift];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward_accumulate(const BasicTensor<T>& input,
                                          const BasicTensor<T>& weights, Padding padding,
                                          const BasicTensor<T>& upstream, bool want_input,
                                          BasicTensor<T>* weight_grad, BasicTensor<T>* bias_grad,
                                          T scale) {
  const auto g = conv_geometry(input.shape(), weights.shape(), Shape{weights.dim(0)}, padding);
  if (upstream.shape() != Shape{g.c_out, g.out_h, g.out_w}) {
    shape_mismatch("conv2d_backward", upstream.shape(), Shape{g.c_out, g.out_h, g.out_w});
  }
  if (weight_grad && weight_grad->shape() != weights.shape()) {
    shape_mismatch("conv2d_backward", weight_grad->shape(), weights.shape());
  }
  if (bias_grad && bias_grad->shape() != Shape{g.c_out}) {
    shape_mismatch("conv2d_backward", bias_grad->shape(), Shape{g.c_out});
  }
  BasicTensor<T> grad_input;
  if (want_input) grad_input = BasicTensor<T>(input.shape());
  const std::size_t plane = g.out_h * g.out_w;
  const T* in = input.data().data();
  const T* w = weights.data().data();
  const T* up = upstream.data().data();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const T* up_plane = up + co * plane;
    if (bias_grad) {
      T sum{0};
      for (std::size_t i = 0; i < plane; ++i) sum += up_plane[i];
      (*bias_grad)[co] += scale * sum;
    }
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const std::size_t in_offset = ci * g.height * g.width;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const std::size_t widx = ((co * g.c_in + ci) * g.k_h + ky) * g.k_w + kx;
          const T wv = w[widx];
          const std::size_t lo = g.col_lo(kx), hi = g.col_hi(kx);
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - g.pad_w;
          T wsum{0};
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - g.pad_h;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            const std::size_t row = in_offset + static_cast<std::size_t>(iy) * g.width;
            const T* up_row = up_plane + oy * g.out_w;
            const T* in_row = in + row;
            if (weight_grad) {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                wsum += up_row[ox] * in_row[static_cast<std::ptrdiff_t>(ox) + shift];
              }
            }
            if (want_input) {
              T* gin_row = grad_input.data().data() + row;
              for (std::size_t ox = lo; ox < hi; ++ox) {
                gin_row[static_cast<std::ptrdiff_t>(ox) + shift] += wv * up_row[ox];
              }
            }
          }
          if (weight_grad) (*weight_grad)[widx] += scale * wsum;
        }
      }
    }
  }
  return grad_input;
}

template <typename T>
LayerGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              Padding padding, const BasicTensor<T>& upstream,
                              GradRequest request) {
  LayerGrads<T> grads;
  if (request.params) {
    grads.weights = BasicTensor<T>(weights.shape());
    grads.bias = BasicTensor<T>({weights.dim(0)});
  }
  grads.input = conv2d_backward_accumulate(input, weights, padding, upstream, request.input,
                                           request.params ? &grads.weights : nullptr,
                                           request.params ? &grads.bias : nullptr);
  return grads;
}

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& input) {
  if (input.rank() != 3 || input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
    throw ShapeError("maxpool2: input " + to_string(input.shape()) +
                     " must be (C,H,W) with even H and W");
  }
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t out_h = height / 2, out_w = width / 2;
  PoolResult<T> result{BasicTensor<T>({channels, out_h, out_w}), {}};
  result.argmax.resize(result.output.size());
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++k) {
        const std::size_t base = (c * height + 2 * oy) * width + 2 * ox;
        const std::size_t window[4] = {base, base + 1, base + width, base + width + 1};
        std::size_t best = window[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (input[window[i]] > input[best]) best = window[i];
        }
        result.output[k] = input[best];
        result.argmax[k] = best;
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                 const BasicTensor<T>& upstream) {
  if (upstream.size() != argmax.size()) {
    shape_mismatch("maxpool2_backward", upstream.shape(), Shape{argmax.size()});
  }
  BasicTensor<T> grad(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) grad[argmax[k]] += upstream[k];
  return grad;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
  if (input.rank() != 1 || weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    shape_mismatch("dense", input.shape(), weights.shape());
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    shape_mismatch("dense", weights.shape(), bias.shape());
  }
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  BasicTensor<T> out({rows});
  const T* x = input.data().data();
  for (std::size_t m = 0; m < rows; ++m) {
    const T* w = weights.data().data() + m * cols;
    T sum{0};
    for (std::size_t n = 0; n < cols; ++n) sum += w[n] * x[n];
    out[m] = sum + bias[m];
  }
  return out;
}

template <typename T>
BasicTensor<T> dense_backward_accumulate(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weights,
                                         const BasicTensor<T>& upstream, bool want_input,
                                         BasicTensor<T>* weight_grad, BasicTensor<T>* bias_grad,
                                         T scale) {
  if (input.rank() != 1 || weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    shape_mismatch("dense_backward", input.shape(), weights.shape());
  }
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  if (upstream.shape() != Shape{rows}) {
    shape_mismatch("dense_backward", upstream.shape(), Shape{rows});
  }
  if (weight_grad && weight_grad->shape() != weights.shape()) {
    shape_mismatch("dense_backward", weight_grad->shape(), weights.shape());
  }
  if (bias_grad && bias_grad->shape() != Shape{rows}) {
    shape_mismatch("dense_backward", bias_grad->shape(), Shape{rows});
  }
  BasicTensor<T> grad_input;
  if (want_input) grad_input = BasicTensor<T>({cols});
  const T* x = input.data().data();
  for (std::size_t m = 0; m < rows; ++m) {
    const T u = upstream[m];
    const T* w = weights.data().data() + m * cols;
    if (want_input) {
      T* gx = grad_input.data().data();
      for (std::size_t n = 0; n < cols; ++n) gx[n] += w[n] * u;
    }
    if (weight_grad) {
      T* gw = weight_grad->data().data() + m * cols;
      const T su = scale * u;
      for (std::size_t n = 0; n < cols; ++n) gw[n] += su * x[n];
    }
    if (bias_grad) (*bias_grad)[m] += scale * u;
  }
  return grad_input;
}

template <typename T>
LayerGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& upstream, GradRequest request) {
  LayerGrads<T> grads;
  if (request.params) {
    grads.weights = BasicTensor<T>(weights.shape());
    grads.bias = BasicTensor<T>({weights.dim(0)});
  }
  grads.input = dense_backward_accumulate(input, weights, upstream, request.input,
                                          request.params ? &grads.weights : nullptr,
                                          request.params ? &grads.bias : nullptr);
  return grads;
}

template <typename T>
T sigmoid(T x) {
  // Each branch only exponentiates a non-positive number.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) {
    v = kind == Activation::relu ? (v > T{0} ? v : T{0}) : sigmoid(v);
  }
  return out;
}

template <typename T>
BasicTensor<T> activation_backward(Activation kind, const BasicTensor<T>& input,
                                   const BasicTensor<T>& output, const BasicTensor<T>& upstream) {
  if (input.shape() != upstream.shape() || output.shape() != upstream.shape()) {
    shape_mismatch("activation_backward", input.shape(), upstream.shape());
  }
  BasicTensor<T> grad(upstream.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (kind == Activation::relu) {
      grad[i] = input[i] > T{0} ? upstream[i] : T{0};
    } else {
      grad[i] = upstream[i] * output[i] * (T{1} - output[i]);
    }
  }
  return grad;
}

template <typename T>
BceResult<T> bce_loss(T prediction, int label) {
  if (label != 0 && label != 1) {
    throw ArgumentError("bce_loss: label must be 0 or 1, got " + std::to_string(label));
  }
  const T eps = static_cast<T>(kBceEpsilon);
  const T p = std::clamp(prediction, eps, T{1} - eps);
  const T y = label ? T{1} : T{0};
  const T loss = -(y * std::log(p) + (T{1} - y) * std::log(T{1} - p));
  return {loss, (p - y) / (p * (T{1} - p))};
}

#define RADIODX_INSTANTIATE_OPS(T)                                                             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const BasicTensor<T>&, Padding);                             \
  template BasicTensor<T> conv2d_backward_accumulate(const BasicTensor<T>&,                   \
                                                     const BasicTensor<T>&, Padding,          \
                                                     const BasicTensor<T>&, bool,             \
                                                     BasicTensor<T>*, BasicTensor<T>*, T);    \
  template LayerGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         Padding, const BasicTensor<T>&, GradRequest);        \
  template PoolResult<T> maxpool2(const BasicTensor<T>&);                                     \
  template BasicTensor<T> maxpool2_backward(const Shape&, const std::vector<std::size_t>&,    \
                                            const BasicTensor<T>&);                           \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                const BasicTensor<T>&);                                       \
  template BasicTensor<T> dense_backward_accumulate(const BasicTensor<T>&,                    \
                                                    const BasicTensor<T>&,                    \
                                                    const BasicTensor<T>&, bool,              \
                                                    BasicTensor<T>*, BasicTensor<T>*, T);     \
  template LayerGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                        const BasicTensor<T>&, GradRequest);                  \
  template T sigmoid(T);                                                                      \
  template BasicTensor<T> activation(Activation, const BasicTensor<T>&);                      \
  template BasicTensor<T> activation_backward(Activation, const BasicTensor<T>&,              \
                                              const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BceResult<T> bce_loss(T, int);

RADIODX_INSTANTIATE_OPS(float)
RADIODX_INSTANTIATE_OPS(double)

#undef RADIODX_INSTANTIATE_OPS

}  // namespace radiodx::ops
