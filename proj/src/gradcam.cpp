#include "radiodx/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "radiodx/errors.hpp"

namespace radiodx {

std::array<double, 3> heat_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  const Rgb& from = v <= 0.5 ? kHeatPurple : kHeatGreen;
  const Rgb& to = v <= 0.5 ? kHeatGreen : kHeatYellow;
  const double t = v <= 0.5 ? 2.0 * v : 2.0 * v - 1.0;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = from[c] + (to[c] - from[c]) * t;
  return out;
}

std::size_t gradcam_target(const Model& model, std::optional<std::string_view> selector) {
  const auto layers = model.layers();
  if (selector) {
    const auto hits = select_layers(model, *selector);
    if (hits.size() != 1) {
      throw ArgumentError("Grad-CAM layer selector '" + std::string(*selector) + "' matches " +
                          std::to_string(hits.size()) + " layers; exactly one is required");
    }
    if (layers[hits[0]].spec.kind != LayerKind::conv) {
      throw ArgumentError("Grad-CAM layer '" + layers[hits[0]].spec.name +
                          "' is not convolutional");
    }
    return hits[0];
  }
  std::optional<std::size_t> last_conv, last_backbone_conv;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.kind != LayerKind::conv) continue;
    last_conv = i;
    if (layers[i].spec.name.starts_with("backbone.")) last_backbone_conv = i;
  }
  if (last_backbone_conv) return *last_backbone_conv;
  if (last_conv) return *last_conv;
  throw ArgumentError("model has no convolutional layer for Grad-CAM");
}

Heatmap compute_gradcam(const Model& model, const Tensor& input,
                        std::optional<std::string_view> selector) {
  const auto layers = model.layers();
  std::size_t target = gradcam_target(model, selector);
  if (target + 1 < layers.size() && layers[target + 1].spec.kind == LayerKind::activation &&
      layers[target + 1].spec.activation == ops::Activation::relu) {
    ++target;
  }
  const bool sigmoid_head = layers.back().spec.kind == LayerKind::activation &&
                            layers.back().spec.activation == ops::Activation::sigmoid;
  const std::size_t score = sigmoid_head ? layers.size() - 2 : layers.size() - 1;
  if (layers[score].output_shape != Shape{1}) {
    throw ArgumentError("Grad-CAM needs a model with a single output score");
  }

  const ForwardTrace trace = forward_trace(model, input);
  const Tensor& acts = trace.values[target + 1];
  const Tensor grad = backprop_to(model, trace, score, Tensor({1}, {1.0f}), target);
  const std::size_t channels = acts.dim(0), h = acts.dim(1), w = acts.dim(2);
  const std::size_t plane = h * w;

  std::vector<double> weights(channels);
  for (std::size_t k = 0; k < channels; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += grad[k * plane + i];
    weights[k] = sum / static_cast<double>(plane);
  }
  FloatImage raw(w, h, 1);
  bool any_positive = false;
  for (std::size_t i = 0; i < plane; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < channels; ++k) v += weights[k] * acts[k * plane + i];
    raw.samples[i] = v > 0.0 ? static_cast<float>(v) : 0.0f;
    any_positive = any_positive || raw.samples[i] > 0.0f;
  }

  const std::size_t in_h = model.input_shape()[1], in_w = model.input_shape()[2];
  Heatmap map{in_w, in_h, std::vector<float>(in_w * in_h, 0.0f), !any_positive};
  if (map.all_zero) return map;
  const FloatImage up = resize_bilinear(raw, in_w, in_h);
  const float peak = *std::max_element(up.samples.begin(), up.samples.end());
  if (!(peak > 0.0f)) {
    map.all_zero = true;
    return map;
  }
  for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = up.samples[i] / peak;
  return map;
}

namespace {

FloatImage heatmap_image(const Heatmap& heatmap) {
  FloatImage img(heatmap.width, heatmap.height, 1);
  img.samples = heatmap.values;
  return img;
}

}  // namespace

Raster colorize_overlay(const Heatmap& heatmap, const Raster& base, const OverlayParams& params) {
  if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) {
    throw ArgumentError("overlay alpha must lie in [0, 1]");
  }
  FloatImage heat = heatmap_image(heatmap);
  if (heat.width != base.width || heat.height != base.height) {
    heat = resize_bilinear(heat, base.width, base.height);
  }
  Raster out(base.width, base.height, 3);
  for (std::size_t y = 0; y < base.height; ++y) {
    for (std::size_t x = 0; x < base.width; ++x) {
      const auto color = heat_color(heat.at(0, y, x));
      for (std::size_t c = 0; c < 3; ++c) {
        const double b = base.at(x, y, base.channels == 1 ? 0 : c);
        const double v = (1.0 - params.alpha) * b + params.alpha * color[c];
        out.at(x, y, c) = static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Raster heatmap_raster(const Heatmap& heatmap) {
  return to_raster(heatmap_image(heatmap));
}

}  // namespace radiodx
