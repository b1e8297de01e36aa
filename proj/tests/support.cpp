#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "radiodx/errors.hpp"

namespace radiodx::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("radiodx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ImageLoader memory_loader(std::map<std::string, Raster> images) {
  return [table = std::move(images)](const std::string& path) {
    const auto it = table.find(path);
    if (it == table.end()) throw IoError(path, "no such fixture");
    return it->second;
  };
}

Raster brightness_image(Label label, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const double base = label == Label::pneumonia ? 0.7 : 0.3;
  Raster r(size, size, 1);
  for (auto& s : r.samples) {
    const double v = base + uniform_range(rng, -0.1, 0.1);
    s = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return r;
}

Raster quadrant_image(bool positive, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(size, size, 1);
  const std::size_t half = size / 2;
  const std::size_t side = half / 2 + uniform_index(rng, half / 4);
  const std::size_t quadrant = positive ? 0 : 1 + uniform_index(rng, 3);
  const std::size_t qx = (quadrant % 2) * half, qy = (quadrant / 2) * half;
  const std::size_t x0 = qx + uniform_index(rng, half - side + 1);
  const std::size_t y0 = qy + uniform_index(rng, half - side + 1);
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) {
      r.at(x, y) = static_cast<std::uint8_t>(200 + uniform_index(rng, 56));
    }
  }
  return r;
}

std::vector<ManifestEntry> synthetic_manifest(std::size_t normal, std::size_t pneumonia) {
  std::vector<ManifestEntry> out;
  out.reserve(normal + pneumonia);
  for (std::size_t i = 0; i < normal + pneumonia; ++i) {
    const bool pos = i >= normal;
    out.push_back({(pos ? "PNEUMONIA/img" : "NORMAL/img") + std::to_string(i) + ".pgm",
                   pos ? Label::pneumonia : Label::normal});
  }
  return out;
}

Raster random_raster(std::size_t w, std::size_t h, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(w, h, c);
  for (auto& s : r.samples) s = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace radiodx::testing
