#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radiodx/ops.hpp"
#include "radiodx/tensor.hpp"

namespace radiodx {

enum class LayerKind { conv, maxpool, flatten, dense, activation, dropout };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::flatten;
  // conv
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  ops::Padding padding = ops::Padding::same;
  // dense
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  // activation
  ops::Activation activation = ops::Activation::relu;
  // dropout
  double dropout_rate = 0.0;
  bool trainable = true;

  static LayerSpec conv(std::string name, std::size_t in_channels, std::size_t out_channels,
                        std::size_t kernel = 3, ops::Padding padding = ops::Padding::same);
  static LayerSpec maxpool(std::string name);
  static LayerSpec flatten(std::string name);
  static LayerSpec dense(std::string name, std::size_t in_features, std::size_t out_features);
  static LayerSpec act(std::string name, ops::Activation kind);
  static LayerSpec dropout(std::string name, double rate);

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
};

struct Layer {
  LayerSpec spec;
  Shape input_shape;
  Shape output_shape;
  Parameter weight;  ///< empty for parameter-free layers
  Parameter bias;
};

/// Sequential network. Construction validates that adjacent layer shapes
/// compose and initializes weights He-uniform (limit sqrt(6 / fan_in)) with
/// zero biases; every parameter tensor draws from its own stream derived
/// from init_seed and the layer index.
class Model {
 public:
  Model(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t init_seed);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::span<Layer> layers() noexcept { return layers_; }
  std::span<const Layer> layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }

  /// Index of a layer by exact name.
  std::optional<std::size_t> find(std::string_view name) const;

  void zero_grad();

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
};

struct NamedParameter {
  std::string name;  ///< "<layer>.weight" or "<layer>.bias"
  Parameter* param;
};
struct ConstNamedParameter {
  std::string name;
  const Parameter* param;
};

/// Parameters in layer order, weight before bias.
std::vector<NamedParameter> named_parameters(Model& model);
std::vector<ConstNamedParameter> named_parameters(const Model& model);

/// Same shapes and bit-identical parameter values (gradients ignored).
bool same_weights(const Model& a, const Model& b);

// ---------------------------------------------------------------------------
// Architectures.

enum class Backbone { vgg19, tiny };

Backbone parse_backbone(std::string_view name);
std::string_view to_string(Backbone backbone);

/// Dense widths between the flattened backbone output and the single
/// output unit. `dropout` > 0 inserts a dropout layer after each hidden ReLU.
struct HeadSpec {
  std::vector<std::size_t> hidden = {1024, 256};
  double dropout = 0.0;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

/// vgg19: the 16 3x3 same-padded conv layers and 5 max-pools of the
/// standard 19-layer configuration, frozen. tiny: conv(8)+pool, conv(16)+pool,
/// frozen. The head (flatten, dense+ReLU per hidden width, dense(1)+sigmoid)
/// is trainable. Layers are named "backbone.*" and "head.*".
Model build_model(Backbone backbone, const HeadSpec& head, std::uint64_t init_seed,
                  std::size_t input_size = 224);

/// Fully connected stack over a flat input, e.g. {4, 10, 10, 1}: ReLU between
/// hidden layers, sigmoid at the end.
Model build_mlp(std::span<const std::size_t> widths, std::uint64_t init_seed);

// ---------------------------------------------------------------------------
// Selection and freezing.

/// Layers whose names match a glob pattern ('*' matches any run of
/// characters, '?' a single character).
std::vector<std::size_t> select_layers(const Model& model, std::string_view selector);

/// Sets the trainable flag of every selected layer and its parameters.
/// Throws ArgumentError when the selector matches no layer.
Model& set_trainable(Model& model, std::string_view selector, bool trainable);

struct ParamCounts {
  std::uint64_t total = 0;
  std::uint64_t trainable = 0;
  std::uint64_t frozen = 0;
};

ParamCounts count_params(const Model& model);

// ---------------------------------------------------------------------------
// Forward and backward.

struct ForwardOptions {
  bool training = false;          ///< enables dropout
  std::uint64_t dropout_seed = 0;
};

/// Activations retained for backpropagation.
struct ForwardTrace {
  /// values[i] is the input of layer i; values.back() is the model output.
  std::vector<Tensor> values;
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<Tensor> dropout_masks;

  float probability() const { return values.back()[0]; }
};

ForwardTrace forward_trace(const Model& model, const Tensor& input,
                           const ForwardOptions& options = {});

/// Inference-mode output of a single-output model for one input.
float predict(const Model& model, const Tensor& input);

/// One probability per sample of a (B, ...) batch, computed in parallel.
std::vector<float> predict_batch(const Model& model, const Tensor& batch);

/// Backpropagates top_grad = dL/d(output of layer `top`) and adds
/// scale * dL/d(param) into the gradient of every trainable parameter at or
/// below `top`. Stops at the lowest trainable layer.
void accumulate_gradients(Model& model, const ForwardTrace& trace, std::size_t top,
                          const Tensor& top_grad, float scale);

/// Gradient with respect to the output of layer `bottom`, given the gradient
/// with respect to the output of layer `top` (top >= bottom). Parameter
/// gradients are not touched.
Tensor backprop_to(const Model& model, const ForwardTrace& trace, std::size_t top,
                   const Tensor& top_grad, std::size_t bottom);

// ---------------------------------------------------------------------------
// RXW1 weights container.

enum class WeightsErrorKind {
  bad_magic,
  bad_version,
  truncated,
  missing_tensor,
  unexpected_tensor,
  duplicate_tensor,
  shape_mismatch
};

class WeightsError : public std::runtime_error {
 public:
  WeightsError(WeightsErrorKind kind, std::string tensor, const std::string& what)
      : std::runtime_error(what), kind_(kind), tensor_(std::move(tensor)) {}
  WeightsErrorKind kind() const noexcept { return kind_; }
  /// Tensor involved, empty for container-level errors.
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  WeightsErrorKind kind_;
  std::string tensor_;
};

/// "RXW1", u32 version 1, u32 count, then per tensor: u32 name length, name,
/// u32 rank, rank x u32 dims, little-endian f32 data.
std::vector<std::uint8_t> save_weights(const Model& model);

/// Replaces every parameter value. Either all tensors load or the model is
/// left untouched.
void load_weights(Model& model, std::span<const std::uint8_t> bytes);

}  // namespace radiodx
