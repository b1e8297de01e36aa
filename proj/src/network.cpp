#include "radiodx/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "radiodx/errors.hpp"
#include "radiodx/parallel.hpp"
#include "radiodx/random.hpp"

namespace radiodx {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::string name, std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel, ops::Padding padding) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::conv;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::maxpool(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::maxpool;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t in_features, std::size_t out_features) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::dense;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

LayerSpec LayerSpec::act(std::string name, ops::Activation kind) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::activation;
  s.activation = kind;
  return s;
}

LayerSpec LayerSpec::dropout(std::string name, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::dropout;
  s.dropout_rate = rate;
  return s;
}

// ---------------------------------------------------------------------------

namespace {

Shape infer_output_shape(const LayerSpec& spec, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw ShapeError("layer '" + spec.name + "' (" + std::string(to_string(spec.kind)) +
                     ") cannot take input " + to_string(in) + ": " + why);
  };
  switch (spec.kind) {
    case LayerKind::conv:
      if (in.size() != 3 || in[0] != spec.in_channels) return fail("channel mismatch");
      return ops::conv2d_output_shape(in, {spec.out_channels, spec.in_channels, spec.kernel,
                                           spec.kernel},
                                      {spec.out_channels}, spec.padding);
    case LayerKind::maxpool:
      if (in.size() != 3 || in[1] % 2 || in[2] % 2) return fail("needs (C,H,W) with even H, W");
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::flatten:
      return {checked_volume(in)};
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != spec.in_features) return fail("feature mismatch");
      return {spec.out_features};
    case LayerKind::activation:
    case LayerKind::dropout:
      return in;
  }
  return fail("unknown layer kind");
}

void he_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(uniform_range(rng, -limit, limit));
}

}  // namespace

Model::Model(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t init_seed)
    : input_shape_(std::move(input_shape)) {
  checked_volume(input_shape_);
  Shape current = input_shape_;
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer;
    layer.spec = std::move(specs[i]);
    if (find(layer.spec.name)) throw ArgumentError("duplicate layer name '" + layer.spec.name + "'");
    layer.input_shape = current;
    layer.output_shape = infer_output_shape(layer.spec, current);
    const bool trainable = layer.spec.trainable;
    if (layer.spec.kind == LayerKind::conv) {
      const auto& s = layer.spec;
      Tensor w({s.out_channels, s.in_channels, s.kernel, s.kernel});
      he_uniform(w, s.in_channels * s.kernel * s.kernel, mix_seed(init_seed, i));
      layer.weight = Parameter(std::move(w), trainable);
      layer.bias = Parameter(Tensor({s.out_channels}), trainable);
    } else if (layer.spec.kind == LayerKind::dense) {
      const auto& s = layer.spec;
      Tensor w({s.out_features, s.in_features});
      he_uniform(w, s.in_features, mix_seed(init_seed, i));
      layer.weight = Parameter(std::move(w), trainable);
      layer.bias = Parameter(Tensor({s.out_features}), trainable);
    }
    current = layer.output_shape;
    layers_.push_back(std::move(layer));
  }
}

std::optional<std::size_t> Model::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].spec.name == name) return i;
  }
  return std::nullopt;
}

void Model::zero_grad() {
  for (auto& layer : layers_) {
    if (!layer.spec.has_params()) continue;
    layer.weight.zero_grad();
    layer.bias.zero_grad();
  }
}

std::vector<NamedParameter> named_parameters(Model& model) {
  std::vector<NamedParameter> out;
  for (auto& layer : model.layers()) {
    if (!layer.spec.has_params()) continue;
    out.push_back({layer.spec.name + ".weight", &layer.weight});
    out.push_back({layer.spec.name + ".bias", &layer.bias});
  }
  return out;
}

std::vector<ConstNamedParameter> named_parameters(const Model& model) {
  std::vector<ConstNamedParameter> out;
  for (const auto& layer : model.layers()) {
    if (!layer.spec.has_params()) continue;
    out.push_back({layer.spec.name + ".weight", &layer.weight});
    out.push_back({layer.spec.name + ".bias", &layer.bias});
  }
  return out;
}

bool same_weights(const Model& a, const Model& b) {
  const auto pa = named_parameters(a);
  const auto pb = named_parameters(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || !bitwise_equal(pa[i].param->value, pb[i].param->value)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

Backbone parse_backbone(std::string_view name) {
  if (name == "vgg19") return Backbone::vgg19;
  if (name == "tiny") return Backbone::tiny;
  throw ArgumentError("unknown backbone '" + std::string(name) + "'");
}

std::string_view to_string(Backbone backbone) {
  return backbone == Backbone::vgg19 ? "vgg19" : "tiny";
}

Model build_model(Backbone backbone, const HeadSpec& head, std::uint64_t init_seed,
                  std::size_t input_size) {
  std::vector<LayerSpec> specs;
  // Channel width per conv layer, one inner vector per pooling block.
  const std::vector<std::vector<std::size_t>> blocks =
      backbone == Backbone::vgg19
          ? std::vector<std::vector<std::size_t>>{{64, 64},
                                                  {128, 128},
                                                  {256, 256, 256, 256},
                                                  {512, 512, 512, 512},
                                                  {512, 512, 512, 512}}
          : std::vector<std::vector<std::size_t>>{{8}, {16}};
  std::size_t channels = 3;
  std::size_t spatial = input_size;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "backbone.block" + std::to_string(b + 1) + "_";
    for (std::size_t k = 0; k < blocks[b].size(); ++k) {
      const std::string id = std::to_string(k + 1);
      specs.push_back(LayerSpec::conv(prefix + "conv" + id, channels, blocks[b][k]));
      specs.push_back(LayerSpec::act(prefix + "relu" + id, ops::Activation::relu));
      channels = blocks[b][k];
    }
    specs.push_back(LayerSpec::maxpool(prefix + "pool"));
    if (spatial % 2) {
      throw ShapeError("input size " + std::to_string(input_size) + " is not divisible by " +
                       std::to_string(std::size_t{1} << blocks.size()));
    }
    spatial /= 2;
  }
  for (auto& s : specs) s.trainable = false;

  std::size_t features = channels * spatial * spatial;
  specs.push_back(LayerSpec::flatten("head.flatten"));
  for (std::size_t i = 0; i < head.hidden.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    specs.push_back(LayerSpec::dense("head.dense" + id, features, head.hidden[i]));
    specs.push_back(LayerSpec::act("head.relu" + id, ops::Activation::relu));
    if (head.dropout > 0.0) specs.push_back(LayerSpec::dropout("head.dropout" + id, head.dropout));
    features = head.hidden[i];
  }
  specs.push_back(
      LayerSpec::dense("head.dense" + std::to_string(head.hidden.size() + 1), features, 1));
  specs.push_back(LayerSpec::act("head.sigmoid", ops::Activation::sigmoid));
  return Model({3, input_size, input_size}, std::move(specs), init_seed);
}

Model build_mlp(std::span<const std::size_t> widths, std::uint64_t init_seed) {
  if (widths.size() < 2) throw ArgumentError("build_mlp needs at least input and output widths");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const std::string id = std::to_string(i);
    specs.push_back(LayerSpec::dense("dense" + id, widths[i - 1], widths[i]));
    const bool last = i + 1 == widths.size();
    specs.push_back(LayerSpec::act(last ? "sigmoid" : "relu" + id,
                                   last ? ops::Activation::sigmoid : ops::Activation::relu));
  }
  return Model({widths.front()}, std::move(specs), init_seed);
}

// ---------------------------------------------------------------------------

namespace {

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace

std::vector<std::size_t> select_layers(const Model& model, std::string_view selector) {
  std::vector<std::size_t> out;
  const auto layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (glob_match(selector, layers[i].spec.name)) out.push_back(i);
  }
  return out;
}

Model& set_trainable(Model& model, std::string_view selector, bool trainable) {
  const auto selected = select_layers(model, selector);
  if (selected.empty()) {
    throw ArgumentError("selector '" + std::string(selector) + "' matches no layer");
  }
  for (auto i : selected) {
    auto& layer = model.layers()[i];
    layer.spec.trainable = trainable;
    layer.weight.trainable = trainable;
    layer.bias.trainable = trainable;
  }
  return model;
}

ParamCounts count_params(const Model& model) {
  ParamCounts counts;
  for (const auto& np : named_parameters(model)) {
    const auto n = static_cast<std::uint64_t>(np.param->value.size());
    counts.total += n;
    (np.param->trainable ? counts.trainable : counts.frozen) += n;
  }
  return counts;
}

// ---------------------------------------------------------------------------

namespace {

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
  Tensor mask(shape);
  Rng rng(seed);
  const auto keep = static_cast<float>(1.0 / (1.0 - rate));
  for (auto& v : mask.data()) v = uniform01(rng) >= rate ? keep : 0.0f;
  return mask;
}

Tensor layer_forward(const Layer& layer, const Tensor& x, std::size_t index,
                     const ForwardOptions& options, std::vector<std::size_t>* argmax,
                     Tensor* mask) {
  switch (layer.spec.kind) {
    case LayerKind::conv:
      return ops::conv2d(x, layer.weight.value, layer.bias.value, layer.spec.padding);
    case LayerKind::maxpool: {
      auto pooled = ops::maxpool2(x);
      if (argmax) *argmax = std::move(pooled.argmax);
      return std::move(pooled.output);
    }
    case LayerKind::flatten: {
      Tensor out = x;
      out.reshape({x.size()});
      return out;
    }
    case LayerKind::dense:
      return ops::dense(x, layer.weight.value, layer.bias.value);
    case LayerKind::activation:
      return ops::activation(layer.spec.activation, x);
    case LayerKind::dropout: {
      if (!options.training || layer.spec.dropout_rate == 0.0) return x;
      Tensor m = dropout_mask(x.shape(), layer.spec.dropout_rate,
                              mix_seed(options.dropout_seed, index));
      Tensor out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
      if (mask) *mask = std::move(m);
      return out;
    }
  }
  throw ArgumentError("unknown layer kind");
}

// Gradient with respect to the input of layer i. Parameter gradients go to
// weight_grad / bias_grad when those are non-null.
Tensor layer_backward(const Layer& layer, const ForwardTrace& trace, std::size_t i,
                      const Tensor& upstream, bool want_input, Tensor* weight_grad,
                      Tensor* bias_grad, float scale) {
  const Tensor& x = trace.values[i];
  switch (layer.spec.kind) {
    case LayerKind::conv:
      return ops::conv2d_backward_accumulate(x, layer.weight.value, layer.spec.padding, upstream,
                                             want_input, weight_grad, bias_grad, scale);
    case LayerKind::dense:
      return ops::dense_backward_accumulate(x, layer.weight.value, upstream, want_input,
                                            weight_grad, bias_grad, scale);
    case LayerKind::maxpool:
      return ops::maxpool2_backward(x.shape(), trace.argmax[i], upstream);
    case LayerKind::flatten: {
      Tensor g = upstream;
      g.reshape(x.shape());
      return g;
    }
    case LayerKind::activation:
      return ops::activation_backward(layer.spec.activation, x, trace.values[i + 1], upstream);
    case LayerKind::dropout: {
      if (trace.dropout_masks[i].empty()) return upstream;
      Tensor g = upstream;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= trace.dropout_masks[i][k];
      return g;
    }
  }
  throw ArgumentError("unknown layer kind");
}

void check_input(const Model& model, const Tensor& input) {
  if (input.shape() != model.input_shape()) {
    throw ShapeError("model expects input " + to_string(model.input_shape()) + ", got " +
                     to_string(input.shape()));
  }
}

}  // namespace

ForwardTrace forward_trace(const Model& model, const Tensor& input,
                           const ForwardOptions& options) {
  check_input(model, input);
  ForwardTrace trace;
  const auto layers = model.layers();
  trace.values.reserve(layers.size() + 1);
  trace.values.push_back(input);
  trace.argmax.resize(layers.size());
  trace.dropout_masks.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    trace.values.push_back(layer_forward(layers[i], trace.values.back(), i, options,
                                         &trace.argmax[i], &trace.dropout_masks[i]));
  }
  return trace;
}

float predict(const Model& model, const Tensor& input) {
  check_input(model, input);
  Tensor x = input;
  const ForwardOptions inference;
  const auto layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layer_forward(layers[i], x, i, inference, nullptr, nullptr);
  }
  if (x.size() != 1) throw ShapeError("predict needs a single-output model");
  return x[0];
}

std::vector<float> predict_batch(const Model& model, const Tensor& batch) {
  const Shape& in = model.input_shape();
  if (batch.rank() != in.size() + 1 || !std::equal(in.begin(), in.end(), batch.shape().begin() + 1)) {
    throw ShapeError("batch " + to_string(batch.shape()) + " does not hold model inputs " +
                     to_string(in));
  }
  const std::size_t count = batch.dim(0);
  const std::size_t stride = checked_volume(in);
  std::vector<float> out(count);
  parallel_for(count, [&](std::size_t b) {
    const auto first = batch.data().begin() + static_cast<std::ptrdiff_t>(b * stride);
    Tensor sample(in, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(stride)));
    out[b] = predict(model, sample);
  });
  return out;
}

void accumulate_gradients(Model& model, const ForwardTrace& trace, std::size_t top,
                          const Tensor& top_grad, float scale) {
  auto layers = model.layers();
  if (trace.values.size() != layers.size() + 1) {
    throw ArgumentError("forward trace does not belong to this model");
  }
  if (top >= layers.size()) throw ArgumentError("accumulate_gradients: bad top layer");
  std::size_t lowest = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.has_params() && layers[i].weight.trainable) {
      lowest = i;
      break;
    }
  }
  if (lowest > top) return;
  Tensor grad = top_grad;
  for (std::size_t i = top + 1; i-- > lowest;) {
    auto& layer = layers[i];
    const bool params = layer.spec.has_params() && layer.weight.trainable;
    grad = layer_backward(layer, trace, i, grad, i > lowest, params ? &layer.weight.grad : nullptr,
                          params ? &layer.bias.grad : nullptr, scale);
  }
}

Tensor backprop_to(const Model& model, const ForwardTrace& trace, std::size_t top,
                   const Tensor& top_grad, std::size_t bottom) {
  if (top >= model.size() || bottom > top) throw ArgumentError("backprop_to: bad layer range");
  Tensor grad = top_grad;
  for (std::size_t i = top; i > bottom; --i) {
    grad = layer_backward(model.layers()[i], trace, i, grad, true, nullptr, nullptr, 1.0f);
  }
  return grad;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'X', 'W', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }

  std::uint32_t u32(const std::string& context) {
    need(4, context);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const std::string& context) {
    need(n, context);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n, const std::string& context) const {
    if (!has(n)) {
      throw WeightsError(WeightsErrorKind::truncated, context,
                         "weights container truncated while reading " +
                             (context.empty() ? std::string("header") : "'" + context + "'"));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_weights(const Model& model) {
  const auto params = named_parameters(model);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& np : params) {
    put_u32(out, static_cast<std::uint32_t>(np.name.size()));
    out.insert(out.end(), np.name.begin(), np.name.end());
    const Tensor& t = np.param->value;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.reserve(out.size() + t.size() * 4);
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void load_weights(Model& model, std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw WeightsError(WeightsErrorKind::bad_magic, "", "not an RXW1 weights container");
  }
  const auto version = in.u32("");
  if (version != kVersion) {
    throw WeightsError(WeightsErrorKind::bad_version, "",
                       "unsupported weights container version " + std::to_string(version));
  }
  auto params = named_parameters(model);
  std::map<std::string, Parameter*> by_name;
  for (auto& np : params) by_name.emplace(np.name, np.param);

  std::map<std::string, Tensor> loaded;
  const auto count = in.u32("");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = in.u32("");
    const auto name_bytes = in.take(name_len, "");
    const std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = in.u32(name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32(name));
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw WeightsError(WeightsErrorKind::unexpected_tensor, name,
                         "weights container holds unknown tensor '" + name + "'");
    }
    if (loaded.count(name)) {
      throw WeightsError(WeightsErrorKind::duplicate_tensor, name,
                         "tensor '" + name + "' appears twice");
    }
    const Shape& expected = it->second->value.shape();
    if (shape != expected) {
      throw WeightsError(WeightsErrorKind::shape_mismatch, name,
                         "tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                             to_string(expected));
    }
    const std::size_t n = checked_volume(shape);
    const auto raw = in.take(n * 4, name);
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    loaded.emplace(name, Tensor(shape, std::move(data)));
  }
  for (const auto& np : params) {
    if (!loaded.count(np.name)) {
      throw WeightsError(WeightsErrorKind::missing_tensor, np.name,
                         "weights container is missing tensor '" + np.name + "'");
    }
  }
  for (auto& np : params) np.param->value = std::move(loaded.at(np.name));
}

}  // namespace radiodx
