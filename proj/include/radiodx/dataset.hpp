#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radiodx/augmentation.hpp"
#include "radiodx/imaging.hpp"
#include "radiodx/tensor.hpp"

namespace radiodx {

/// Positive class is PNEUMONIA (label 1).
enum class Label { normal = 0, pneumonia = 1 };

std::string_view to_string(Label label);
/// Exact match against "NORMAL" / "PNEUMONIA".
std::optional<Label> parse_label(std::string_view text);

struct ManifestEntry {
  std::string path;
  Label label = Label::normal;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Parses a `path,label` CSV. Lines are 1-based in errors; the header is
/// line 1. A trailing CR is treated as part of the line terminator.
std::vector<ManifestEntry> load_manifest(std::string_view csv);
std::string write_manifest(std::span<const ManifestEntry> entries);

struct ClassCounts {
  std::size_t normal = 0;
  std::size_t pneumonia = 0;
  std::size_t total() const { return normal + pneumonia; }
};

ClassCounts count_classes(std::span<const ManifestEntry> entries);

struct SplitOptions {
  std::size_t per_class_test = 150;
  std::uint64_t train_numerator = 4;
  std::uint64_t train_denominator = 5;
  bool stratified = false;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<ManifestEntry> test;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
};

/// Draws `per_class_test` entries per class into `test`; of the n entries
/// left, floor(n * num / den) go to `train` and the rest to `val`. The
/// train/val draw ignores class unless `stratified` is set, in which case the
/// floor rule is applied per class. Each output keeps manifest order.
SplitResult split_dataset(std::span<const ManifestEntry> manifest, const SplitOptions& options);

/// Loads the raster behind a manifest path.
using ImageLoader = std::function<Raster(const std::string& path)>;

/// Loader reading from disk; relative paths are resolved against base_dir.
ImageLoader file_loader(std::filesystem::path base_dir = {});

struct Batch {
  Tensor inputs;                      ///< (B, 3, S, S)
  std::vector<int> labels;            ///< 0 = NORMAL, 1 = PNEUMONIA
  std::vector<std::size_t> indices;   ///< positions in the entry list
};

struct BatchOptions {
  std::size_t batch_size = 32;
  std::uint64_t run_seed = 0;
  std::optional<AugmentationPolicy> augmentation;
  std::size_t input_size = kModelInputSize;
  Normalization normalization = Normalization::unit;
};

/// Permutation of [0, n) for one epoch; a pure function of (run_seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t run_seed, std::uint64_t epoch);

/// Loads one entry and converts it to a (3, S, S) tensor, augmenting with
/// sample_seed(run_seed, epoch, index) when a policy is given.
Tensor load_sample(const ManifestEntry& entry, std::size_t index, std::uint64_t epoch,
                   const ImageLoader& loader, const BatchOptions& options);

/// Lazily assembled batches for one epoch. Samples inside a batch are loaded
/// in parallel; the result does not depend on the worker count.
class BatchStream {
 public:
  BatchStream(std::span<const ManifestEntry> entries, ImageLoader loader, BatchOptions options,
              std::uint64_t epoch);

  std::size_t size() const noexcept { return batch_count_; }
  Batch operator[](std::size_t batch_index) const;

 private:
  std::span<const ManifestEntry> entries_;
  ImageLoader loader_;
  BatchOptions options_;
  std::uint64_t epoch_;
  std::vector<std::size_t> order_;
  std::size_t batch_count_;
};

/// Every batch of one epoch, materialized.
std::vector<Batch> batches(std::span<const ManifestEntry> entries, const ImageLoader& loader,
                           const BatchOptions& options, std::uint64_t epoch);

}  // namespace radiodx
