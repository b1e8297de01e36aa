#pragma once

// Forward and analytic-backward layer primitives. Every function is pure and
// instantiated for float (model state) and double (gradient checking).

#include <cstddef>
#include <string_view>
#include <vector>

#include "radiodx/tensor.hpp"

namespace radiodx::ops {

enum class Padding { same, valid };
enum class Activation { relu, sigmoid };

Padding parse_padding(std::string_view name);
std::string_view to_string(Padding padding);
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

/// Which gradients a backward call should produce.
struct GradRequest {
  bool input = true;
  bool params = true;
};

template <typename T>
struct LayerGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// Output shape of a stride-1 convolution; throws ShapeError on mismatch.
Shape conv2d_output_shape(const Shape& input, const Shape& weights, const Shape& bias,
                          Padding padding);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, Padding padding);

/// Backward of conv2d. Parameter gradients are added into weight_grad and
/// bias_grad scaled by `scale` when those pointers are non-null; the input
/// gradient is returned when requested, otherwise an empty tensor.
template <typename T>
BasicTensor<T> conv2d_backward_accumulate(const BasicTensor<T>& input,
                                          const BasicTensor<T>& weights, Padding padding,
                                          const BasicTensor<T>& upstream, bool want_input,
                                          BasicTensor<T>* weight_grad, BasicTensor<T>* bias_grad,
                                          T scale = T{1});

template <typename T>
LayerGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              Padding padding, const BasicTensor<T>& upstream,
                              GradRequest request = {});

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Flat input index of the winning element for every output cell.
  std::vector<std::size_t> argmax;
};

/// 2x2 / stride 2 max pooling. Ties go to the first element in row-major
/// window order.
template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                 const BasicTensor<T>& upstream);

/// out[m] = sum_n W[m,n] * in[n] + b[m].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> dense_backward_accumulate(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weights,
                                         const BasicTensor<T>& upstream, bool want_input,
                                         BasicTensor<T>* weight_grad, BasicTensor<T>* bias_grad,
                                         T scale = T{1});

template <typename T>
LayerGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& upstream, GradRequest request = {});

template <typename T>
T sigmoid(T x);

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& input);

/// `output` is the forward result for `input`; relu'(0) is 0.
template <typename T>
BasicTensor<T> activation_backward(Activation kind, const BasicTensor<T>& input,
                                   const BasicTensor<T>& output, const BasicTensor<T>& upstream);

inline constexpr double kBceEpsilon = 1e-7;

template <typename T>
struct BceResult {
  T loss;
  /// d loss / d prediction, evaluated at the clamped prediction.
  T gradient;
};

/// Binary cross-entropy with the prediction clamped to [eps, 1 - eps].
template <typename T>
BceResult<T> bce_loss(T prediction, int label);

}  // namespace radiodx::ops
