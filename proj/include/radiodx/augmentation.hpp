#pragma once

#include <cstdint>

#include "radiodx/imaging.hpp"

namespace radiodx {

/// Bounds for the random affine perturbation of training images.
struct AugmentationPolicy {
  double rotation_max = 15.0;  ///< degrees, angle drawn from [-max, max]
  double shear_max = 10.0;     ///< degrees
  double shift_max = 0.1;      ///< fraction of width/height
  double zoom_lo = 0.9;
  double zoom_hi = 1.1;
  double fill_value = 0.0;  ///< value read outside the source image

  /// Throws ArgumentError unless all magnitudes are finite and non-negative,
  /// 0 < zoom_lo <= 1 <= zoom_hi and fill_value lies in [0, 1].
  void validate() const;

  /// Every magnitude zero and zoom fixed at 1.
  static AugmentationPolicy identity();

  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;
};

struct AffineParams {
  double angle = 0.0;  ///< degrees
  double shear = 0.0;  ///< degrees, x-shear
  double dx = 0.0;     ///< pixels
  double dy = 0.0;     ///< pixels
  double zoom = 1.0;

  bool is_identity() const {
    return angle == 0.0 && shear == 0.0 && dx == 0.0 && dy == 0.0 && zoom == 1.0;
  }
};

/// Parameters drawn in the fixed order angle, shear, dx, dy, zoom from a
/// mt19937_64 seeded with `seed`.
AffineParams draw_params(const AugmentationPolicy& policy, std::size_t width,
                         std::size_t height, std::uint64_t seed);

/// Applies one composed affine map anchored at the image centre
/// c = ((W-1)/2, (H-1)/2). A source point p lands at
///
///   q = c + zoom * R(angle) * Shear(shear) * (p - c) + (dx, dy)
///
/// with R = [[cos, -sin], [sin, cos]] in (x right, y down) pixel coordinates
/// and Shear = [[1, tan], [0, 1]]. Every output pixel is filled by inverting
/// the map and sampling bilinearly; taps outside the source read
/// `fill_value`.
FloatImage warp_affine(const FloatImage& image, const AffineParams& params, double fill_value);

struct AugmentResult {
  FloatImage image;
  AffineParams params;
};

AugmentResult augment(const FloatImage& image, const AugmentationPolicy& policy,
                      std::uint64_t seed);

/// Seed for one training sample, independent of batch assembly order.
std::uint64_t sample_seed(std::uint64_t run_seed, std::uint64_t epoch, std::uint64_t index);

}  // namespace radiodx
