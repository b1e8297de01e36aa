// Fixtures shared by the unit tests and the acceptance gate.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "radiodx/dataset.hpp"
#include "radiodx/imaging.hpp"
#include "radiodx/random.hpp"

namespace radiodx::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Loader over an in-memory path -> raster table.
ImageLoader memory_loader(std::map<std::string, Raster> images);

/// Gray image whose mean brightness encodes the label: NORMAL around 0.3,
/// PNEUMONIA around 0.7, with per-pixel noise of +/-0.1.
Raster brightness_image(Label label, std::size_t size, std::uint64_t seed);

/// Black image with a bright square. Positives put it in the top-left
/// quadrant; negatives in one of the other three.
Raster quadrant_image(bool positive, std::size_t size, std::uint64_t seed);

/// Synthetic manifest with the given class counts; paths are unique.
std::vector<ManifestEntry> synthetic_manifest(std::size_t normal, std::size_t pneumonia);

/// Uniform random raster.
Raster random_raster(std::size_t w, std::size_t h, std::size_t c, std::uint64_t seed);

std::string slurp(const std::filesystem::path& path);

}  // namespace radiodx::testing
