#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radiodx/tensor.hpp"

namespace radiodx {

/// 8-bit image, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> samples;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0);
  Raster(std::size_t w, std::size_t h, std::size_t c, std::vector<std::uint8_t> data);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return samples[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return samples[(y * width + x) * channels + c];
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Planar float image (channel, row, column) with samples in [0, 1].
struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<float> samples;

  FloatImage() = default;
  FloatImage(std::size_t w, std::size_t h, std::size_t c, float fill = 0.0f);

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return samples[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return samples[(c * height + y) * width + x];
  }
  bool same_dims(const FloatImage& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }

  friend bool operator==(const FloatImage&, const FloatImage&) = default;
};

// ---------------------------------------------------------------------------
// PGM (P5) / PPM (P6) codec, binary, maxval 255.

enum class PnmErrorKind { malformed_header, truncated, unsupported_maxval };

class PnmError : public std::runtime_error {
 public:
  PnmError(PnmErrorKind kind, std::size_t offset, const std::string& what);
  PnmErrorKind kind() const noexcept { return kind_; }
  /// Byte offset into the input at which decoding failed.
  std::size_t offset() const noexcept { return offset_; }

 private:
  PnmErrorKind kind_;
  std::size_t offset_;
};

Raster decode_pnm(std::span<const std::uint8_t> bytes);

/// Canonical encoding: "P5\n<w> <h>\n255\n" (or P6) followed by the samples.
std::vector<std::uint8_t> encode_pnm(const Raster& raster);

/// Decoder for a non-PNM container (JPEG, PNG, ...), keyed by lower-case
/// file extension including the dot.
using ImageDecoder = std::function<Raster(std::span<const std::uint8_t>)>;
void register_decoder(const std::string& extension, ImageDecoder decoder);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Reads a PGM/PPM file, or any format with a registered decoder.
Raster read_image(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Raster& raster);

// ---------------------------------------------------------------------------
// Resampling and conversion.

/// Bilinear resize with pixel-center alignment: the source coordinate of
/// output index i is (i + 0.5) * in / out - 0.5, clamped to the image.
/// 8-bit output is rounded to nearest, ties to even.
Raster resize_bilinear(const Raster& image, std::size_t out_width, std::size_t out_height);
FloatImage resize_bilinear(const FloatImage& image, std::size_t out_width,
                           std::size_t out_height);

/// Samples scaled by 1/255.
FloatImage to_float_image(const Raster& raster);
/// Samples scaled by 255, clamped, rounded half to even.
Raster to_raster(const FloatImage& image);
/// Rec. 601 luma for RGB input; single-channel input is returned as is.
FloatImage to_grayscale(const FloatImage& image);

inline constexpr std::size_t kModelInputSize = 224;

/// Resize to size x size, replicate gray to 3 channels, scale into [0, 1].
FloatImage to_model_input(const Raster& raster, std::size_t size = kModelInputSize);
/// Same pipeline for an already-normalized float image.
FloatImage to_model_input(const FloatImage& image, std::size_t size = kModelInputSize);

/// How a [0, 1] image is mapped onto network input values.
///  - unit:  values used unchanged.
///  - caffe: RGB->BGR, x255, minus the ImageNet channel means; matches
///           VGG weights converted from Keras/Caffe.
enum class Normalization { unit, caffe };
Normalization parse_normalization(std::string_view name);
std::string_view to_string(Normalization normalization);

/// Planar (C,H,W) tensor for the network.
Tensor to_tensor(const FloatImage& image, Normalization normalization = Normalization::unit);

// ---------------------------------------------------------------------------
// Per-class mean analysis.

/// Streaming per-pixel mean; accumulates in double.
class MeanAccumulator {
 public:
  void add(const FloatImage& image);
  std::size_t count() const noexcept { return count_; }
  FloatImage mean() const;

 private:
  std::size_t count_ = 0;
  std::size_t width_ = 0, height_ = 0, channels_ = 0;
  std::vector<double> sums_;
};

FloatImage mean_image(std::span<const FloatImage> images);

/// Diverging blue/white/red map of d = b - a over [-1, 1]: -1 is pure blue,
/// 0 white, +1 pure red, linear in between, rounded half to even. Both
/// inputs must be single-channel with equal dims.
Raster diff_image(const FloatImage& mean_a, const FloatImage& mean_b);

}  // namespace radiodx
