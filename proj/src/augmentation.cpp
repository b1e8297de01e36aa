#include "radiodx/augmentation.hpp"

#include <cmath>
#include <numbers>

#include "radiodx/errors.hpp"
#include "radiodx/random.hpp"

namespace radiodx {

void AugmentationPolicy::validate() const {
  for (double v : {rotation_max, shear_max, shift_max, zoom_lo, zoom_hi, fill_value}) {
    if (!std::isfinite(v)) throw ArgumentError("augmentation policy values must be finite");
  }
  if (rotation_max < 0 || shear_max < 0 || shift_max < 0) {
    throw ArgumentError("augmentation magnitudes must be non-negative");
  }
  if (!(zoom_lo > 0.0 && zoom_lo <= 1.0 && 1.0 <= zoom_hi)) {
    throw ArgumentError("augmentation zoom range must satisfy 0 < lo <= 1 <= hi");
  }
  if (fill_value < 0.0 || fill_value > 1.0) {
    throw ArgumentError("augmentation fill_value must lie in [0, 1]");
  }
}

AugmentationPolicy AugmentationPolicy::identity() {
  return {0.0, 0.0, 0.0, 1.0, 1.0, 0.0};
}

AffineParams draw_params(const AugmentationPolicy& policy, std::size_t width,
                         std::size_t height, std::uint64_t seed) {
  policy.validate();
  Rng rng(seed);
  AffineParams p;
  p.angle = uniform_range(rng, -policy.rotation_max, policy.rotation_max);
  p.shear = uniform_range(rng, -policy.shear_max, policy.shear_max);
  p.dx = uniform_range(rng, -policy.shift_max, policy.shift_max) * static_cast<double>(width);
  p.dy = uniform_range(rng, -policy.shift_max, policy.shift_max) * static_cast<double>(height);
  p.zoom = uniform_range(rng, policy.zoom_lo, policy.zoom_hi);
  return p;
}

FloatImage warp_affine(const FloatImage& image, const AffineParams& params, double fill_value) {
  if (params.is_identity()) return image;
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double cs = std::cos(params.angle * kDeg), sn = std::sin(params.angle * kDeg);
  const double sh = std::tan(params.shear * kDeg);
  // Forward linear part zoom * R * S.
  const double m00 = params.zoom * cs;
  const double m01 = params.zoom * (cs * sh - sn);
  const double m10 = params.zoom * sn;
  const double m11 = params.zoom * (sn * sh + cs);
  const double det = m00 * m11 - m01 * m10;
  if (!(std::abs(det) > 0.0)) throw ArgumentError("warp_affine: singular transform");
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;

  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const auto w = static_cast<std::ptrdiff_t>(image.width);
  const auto h = static_cast<std::ptrdiff_t>(image.height);

  FloatImage out(image.width, image.height, image.channels);
  for (std::size_t c = 0; c < image.channels; ++c) {
    auto tap = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> double {
      if (x < 0 || y < 0 || x >= w || y >= h) return fill_value;
      return image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        const double qx = static_cast<double>(x) - cx - params.dx;
        const double qy = static_cast<double>(y) - cy - params.dy;
        const double px = cx + i00 * qx + i01 * qy;
        const double py = cy + i10 * qx + i11 * qy;
        const double fx0 = std::floor(px), fy0 = std::floor(py);
        const double fx = px - fx0, fy = py - fy0;
        const auto x0 = static_cast<std::ptrdiff_t>(fx0);
        const auto y0 = static_cast<std::ptrdiff_t>(fy0);
        const double top = tap(x0, y0) + (tap(x0 + 1, y0) - tap(x0, y0)) * fx;
        const double bottom = tap(x0, y0 + 1) + (tap(x0 + 1, y0 + 1) - tap(x0, y0 + 1)) * fx;
        out.at(c, y, x) = static_cast<float>(top + (bottom - top) * fy);
      }
    }
  }
  return out;
}

AugmentResult augment(const FloatImage& image, const AugmentationPolicy& policy,
                      std::uint64_t seed) {
  const AffineParams params = draw_params(policy, image.width, image.height, seed);
  return {warp_affine(image, params, policy.fill_value), params};
}

std::uint64_t sample_seed(std::uint64_t run_seed, std::uint64_t epoch, std::uint64_t index) {
  return mix_seed(run_seed, epoch, index);
}

}  // namespace radiodx
