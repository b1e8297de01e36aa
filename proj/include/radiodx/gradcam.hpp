#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "radiodx/imaging.hpp"
#include "radiodx/network.hpp"

namespace radiodx {

/// Class-activation map at input resolution. Unless all_zero is set, the
/// largest value is exactly 1.
struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;  ///< row-major, in [0, 1]
  bool all_zero = false;

  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

using Rgb = std::array<std::uint8_t, 3>;

// Colormap anchors: low importance purple, mid green, high yellow.
inline constexpr Rgb kHeatPurple = {68, 1, 84};
inline constexpr Rgb kHeatGreen = {53, 183, 121};
inline constexpr Rgb kHeatYellow = {253, 231, 37};

struct OverlayParams {
  double alpha = 0.4;
};

/// Piecewise-linear purple (0) -> green (0.5) -> yellow (1), unrounded.
std::array<double, 3> heat_color(double value);

/// Layer whose activations feed the map: the layer matched by `selector`
/// (exactly one conv layer) or, by default, the last conv layer of the
/// backbone. Throws ArgumentError otherwise.
std::size_t gradcam_target(const Model& model, std::optional<std::string_view> selector = {});

/// Grad-CAM for a single-output model. Gradients are taken of the
/// pre-sigmoid score; the activations are the conv output, or the output of
/// a ReLU that directly follows it.
Heatmap compute_gradcam(const Model& model, const Tensor& input,
                        std::optional<std::string_view> selector = {});

/// Blend (1 - alpha) * base + alpha * colormap(heatmap), rounded half to even.
/// The heatmap is resized to the base dims when they differ.
Raster colorize_overlay(const Heatmap& heatmap, const Raster& base,
                        const OverlayParams& params = {});

/// Grayscale rendering of the map (values x 255).
Raster heatmap_raster(const Heatmap& heatmap);

}  // namespace radiodx
