#include "radiodx/imaging.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "radiodx/errors.hpp"

namespace radiodx {

Raster::Raster(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill)
    : width(w), height(h), channels(c), samples(w * h * c, fill) {
  if (w == 0 || h == 0) throw ShapeError("raster dims must be positive");
  if (c != 1 && c != 3) throw ShapeError("raster must have 1 or 3 channels");
}

Raster::Raster(std::size_t w, std::size_t h, std::size_t c, std::vector<std::uint8_t> data)
    : Raster(w, h, c) {
  if (data.size() != samples.size()) {
    throw ShapeError("raster " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                     std::to_string(c) + " needs " + std::to_string(samples.size()) +
                     " samples, got " + std::to_string(data.size()));
  }
  samples = std::move(data);
}

FloatImage::FloatImage(std::size_t w, std::size_t h, std::size_t c, float fill)
    : width(w), height(h), channels(c), samples(w * h * c, fill) {
  if (w == 0 || h == 0 || c == 0) throw ShapeError("image dims must be positive");
}

// ---------------------------------------------------------------------------

PnmError::PnmError(PnmErrorKind kind, std::size_t offset, const std::string& what)
    : std::runtime_error(what + " at byte " + std::to_string(offset)),
      kind_(kind),
      offset_(offset) {}

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  // Whitespace and '#' comments; at least one byte is required.
  void separator() {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected whitespace", pos_);
  }

  std::size_t number() {
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 24)) fail("header value too large", start);
      ++pos_;
    }
    if (pos_ == start) fail("expected a decimal number", pos_);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  void final_separator() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail("expected a single whitespace byte before the payload", pos_);
    }
    ++pos_;
  }

  [[noreturn]] static void fail(const std::string& what, std::size_t at) {
    throw PnmError(PnmErrorKind::malformed_header, at, "malformed PNM header: " + what);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

Raster decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    HeaderReader::fail("expected magic P5 or P6", 0);
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes, 2);
  reader.separator();
  const std::size_t width_at = reader.pos();
  const std::size_t width = reader.number();
  reader.separator();
  const std::size_t height_at = reader.pos();
  const std::size_t height = reader.number();
  reader.separator();
  const std::size_t maxval_at = reader.pos();
  const std::size_t maxval = reader.number();
  if (width == 0) HeaderReader::fail("zero width", width_at);
  if (height == 0) HeaderReader::fail("zero height", height_at);
  if (maxval != 255) {
    throw PnmError(PnmErrorKind::unsupported_maxval, maxval_at,
                   "unsupported maxval " + std::to_string(maxval) + " (only 255)");
  }
  reader.final_separator();
  const std::size_t header = reader.pos();
  const std::size_t expected = width * height * channels;
  const std::size_t available = bytes.size() - header;
  if (available < expected) {
    throw PnmError(PnmErrorKind::truncated, header + available,
                   "truncated payload: expected " + std::to_string(expected) +
                       " bytes, found " + std::to_string(available));
  }
  const auto payload = bytes.subspan(header, expected);
  return Raster(width, height, channels,
                std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

std::vector<std::uint8_t> encode_pnm(const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw ShapeError("PNM encoding needs 1 or 3 channels");
  }
  const std::string header = std::string(raster.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(raster.width) + " " + std::to_string(raster.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.samples.begin(), raster.samples.end());
  return out;
}

namespace {

std::mutex& decoder_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ImageDecoder>& decoders() {
  static std::map<std::string, ImageDecoder> table;
  return table;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

void register_decoder(const std::string& extension, ImageDecoder decoder) {
  std::lock_guard lock(decoder_mutex());
  decoders()[extension] = std::move(decoder);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Raster read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    try {
      return decode_pnm(bytes);
    } catch (const PnmError& e) {
      throw IoError(path.string(), e.what());
    }
  }
  ImageDecoder decoder;
  {
    std::lock_guard lock(decoder_mutex());
    const auto it = decoders().find(lower_extension(path));
    if (it != decoders().end()) decoder = it->second;
  }
  if (!decoder) throw IoError(path.string(), "not a binary PGM/PPM and no decoder registered");
  try {
    return decoder(bytes);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(path.string(), e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const Raster& raster) {
  write_file(path, encode_pnm(raster));
}

// ---------------------------------------------------------------------------

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_coord = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, max_coord);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

// Two nested lerps so that equal neighbours reproduce their value exactly.
inline double bilerp(double v00, double v01, double v10, double v11, double fx, double fy) {
  const double top = v00 + (v01 - v00) * fx;
  const double bottom = v10 + (v11 - v10) * fx;
  return top + (bottom - top) * fy;
}

std::uint8_t round_to_u8(double v) {
  return static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

Raster resize_bilinear(const Raster& image, std::size_t out_width, std::size_t out_height) {
  if (out_width == 0 || out_height == 0) throw ArgumentError("resize target must be >= 1x1");
  Raster out(out_width, out_height, image.channels);
  const auto xs = bilinear_taps(image.width, out_width);
  const auto ys = bilinear_taps(image.height, out_height);
  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = bilerp(image.at(xs[x].lo, ys[y].lo, c), image.at(xs[x].hi, ys[y].lo, c),
                                image.at(xs[x].lo, ys[y].hi, c), image.at(xs[x].hi, ys[y].hi, c),
                                xs[x].frac, ys[y].frac);
        out.at(x, y, c) = round_to_u8(v);
      }
    }
  }
  return out;
}

FloatImage resize_bilinear(const FloatImage& image, std::size_t out_width,
                           std::size_t out_height) {
  if (out_width == 0 || out_height == 0) throw ArgumentError("resize target must be >= 1x1");
  FloatImage out(out_width, out_height, image.channels);
  const auto xs = bilinear_taps(image.width, out_width);
  const auto ys = bilinear_taps(image.height, out_height);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < out_height; ++y) {
      for (std::size_t x = 0; x < out_width; ++x) {
        out.at(c, y, x) = static_cast<float>(
            bilerp(image.at(c, ys[y].lo, xs[x].lo), image.at(c, ys[y].lo, xs[x].hi),
                   image.at(c, ys[y].hi, xs[x].lo), image.at(c, ys[y].hi, xs[x].hi), xs[x].frac,
                   ys[y].frac));
      }
    }
  }
  return out;
}

FloatImage to_float_image(const Raster& raster) {
  FloatImage out(raster.width, raster.height, raster.channels);
  for (std::size_t c = 0; c < raster.channels; ++c) {
    for (std::size_t y = 0; y < raster.height; ++y) {
      for (std::size_t x = 0; x < raster.width; ++x) {
        out.at(c, y, x) = static_cast<float>(raster.at(x, y, c)) / 255.0f;
      }
    }
  }
  return out;
}

Raster to_raster(const FloatImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("only 1- or 3-channel images convert to rasters");
  }
  Raster out(image.width, image.height, image.channels);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        out.at(x, y, c) = round_to_u8(static_cast<double>(image.at(c, y, x)) * 255.0);
      }
    }
  }
  return out;
}

FloatImage to_grayscale(const FloatImage& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ShapeError("grayscale conversion needs 1 or 3 channels");
  FloatImage out(image.width, image.height, 1);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double v = 0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) +
                       0.114 * image.at(2, y, x);
      out.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

FloatImage to_model_input(const FloatImage& image, std::size_t size) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("model input needs a 1- or 3-channel image");
  }
  const FloatImage resized = resize_bilinear(image, size, size);
  if (resized.channels == 3) return resized;
  FloatImage out(size, size, 3);
  const std::size_t plane = size * size;
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy(resized.samples.begin(), resized.samples.end(),
              out.samples.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return out;
}

FloatImage to_model_input(const Raster& raster, std::size_t size) {
  return to_model_input(to_float_image(raster), size);
}

Normalization parse_normalization(std::string_view name) {
  if (name == "unit") return Normalization::unit;
  if (name == "caffe") return Normalization::caffe;
  throw ArgumentError("unknown normalization '" + std::string(name) + "'");
}

std::string_view to_string(Normalization normalization) {
  return normalization == Normalization::unit ? "unit" : "caffe";
}

Tensor to_tensor(const FloatImage& image, Normalization normalization) {
  Tensor out({image.channels, image.height, image.width}, image.samples);
  if (normalization == Normalization::unit) return out;
  if (image.channels != 3) throw ShapeError("caffe normalization needs 3 channels");
  static constexpr std::array<float, 3> kBgrMean = {103.939f, 116.779f, 123.68f};
  const std::size_t plane = image.width * image.height;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = 2 - c;
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = image.samples[src * plane + i] * 255.0f - kBgrMean[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void MeanAccumulator::add(const FloatImage& image) {
  if (count_ == 0) {
    width_ = image.width;
    height_ = image.height;
    channels_ = image.channels;
    sums_.assign(image.samples.size(), 0.0);
  } else if (image.width != width_ || image.height != height_ || image.channels != channels_) {
    throw ShapeError("mean_image: image " + std::to_string(image.width) + "x" +
                     std::to_string(image.height) + "x" + std::to_string(image.channels) +
                     " differs from " + std::to_string(width_) + "x" + std::to_string(height_) +
                     "x" + std::to_string(channels_));
  }
  for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += image.samples[i];
  ++count_;
}

FloatImage MeanAccumulator::mean() const {
  if (count_ == 0) throw ArgumentError("mean_image: no images");
  FloatImage out(width_, height_, channels_);
  for (std::size_t i = 0; i < sums_.size(); ++i) {
    out.samples[i] = static_cast<float>(sums_[i] / static_cast<double>(count_));
  }
  return out;
}

FloatImage mean_image(std::span<const FloatImage> images) {
  MeanAccumulator acc;
  for (const auto& image : images) acc.add(image);
  return acc.mean();
}

Raster diff_image(const FloatImage& mean_a, const FloatImage& mean_b) {
  if (!mean_a.same_dims(mean_b)) throw ShapeError("diff_image: mean images differ in dims");
  if (mean_a.channels != 1) throw ShapeError("diff_image: means must be single-channel");
  Raster out(mean_a.width, mean_a.height, 3);
  for (std::size_t y = 0; y < mean_a.height; ++y) {
    for (std::size_t x = 0; x < mean_a.width; ++x) {
      const double d =
          std::clamp(static_cast<double>(mean_b.at(0, y, x)) - mean_a.at(0, y, x), -1.0, 1.0);
      const double fade = 255.0 * (1.0 - std::abs(d));
      const auto faded = round_to_u8(fade);
      out.at(x, y, 0) = d < 0 ? faded : 255;
      out.at(x, y, 1) = faded;
      out.at(x, y, 2) = d > 0 ? faded : 255;
    }
  }
  return out;
}

}  // namespace radiodx
