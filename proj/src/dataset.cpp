#include "radiodx/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "radiodx/errors.hpp"
#include "radiodx/parallel.hpp"
#include "radiodx/random.hpp"

namespace radiodx {

std::string_view to_string(Label label) {
  return label == Label::normal ? "NORMAL" : "PNEUMONIA";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "NORMAL") return Label::normal;
  if (text == "PNEUMONIA") return Label::pneumonia;
  return std::nullopt;
}

std::vector<ManifestEntry> load_manifest(std::string_view csv) {
  if (csv.starts_with("\xEF\xBB\xBF")) csv.remove_prefix(3);
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!csv.empty()) {
    const auto eol = csv.find('\n');
    std::string_view line = csv.substr(0, eol);
    csv = eol == std::string_view::npos ? std::string_view{} : csv.substr(eol + 1);
    ++line_no;
    if (line.ends_with('\r')) line.remove_suffix(1);
    if (!header_seen) {
      if (line != "path,label") throw ManifestError(line_no, "header must be 'path,label'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos) throw ManifestError(line_no, "missing label column");
    const std::string path(line.substr(0, comma));
    const auto label_text = line.substr(comma + 1);
    if (path.empty()) throw ManifestError(line_no, "empty path");
    const auto label = parse_label(label_text);
    if (!label) {
      throw ManifestError(line_no, "unknown label '" + std::string(label_text) + "'");
    }
    if (!seen.insert(path).second) throw ManifestError(line_no, "duplicate path '" + path + "'");
    entries.push_back({path, *label});
  }
  if (!header_seen) throw ManifestError(1, "header must be 'path,label'");
  return entries;
}

std::string write_manifest(std::span<const ManifestEntry> entries) {
  std::string out = "path,label\n";
  for (const auto& e : entries) {
    out += e.path;
    out += ',';
    out += to_string(e.label);
    out += '\n';
  }
  return out;
}

ClassCounts count_classes(std::span<const ManifestEntry> entries) {
  ClassCounts counts;
  for (const auto& e : entries) (e.label == Label::normal ? counts.normal : counts.pneumonia)++;
  return counts;
}

SplitResult split_dataset(std::span<const ManifestEntry> manifest, const SplitOptions& options) {
  if (options.train_denominator == 0 || options.train_numerator > options.train_denominator) {
    throw ArgumentError("split: train fraction must lie in [0, 1]");
  }
  Rng rng(mix_seed(options.seed, 0x73706C6974ull));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    by_class[static_cast<int>(manifest[i].label)].push_back(i);
  }
  std::vector<char> in_test(manifest.size(), 0);
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < options.per_class_test) {
      throw ArgumentError("split: class " + std::string(to_string(static_cast<Label>(c))) +
                          " has " + std::to_string(idx.size()) + " entries, fewer than " +
                          std::to_string(options.per_class_test) + " needed for the test set");
    }
    shuffle(std::span(idx), rng);
    for (std::size_t k = 0; k < options.per_class_test; ++k) in_test[idx[k]] = 1;
  }

  std::vector<char> in_train(manifest.size(), 0);
  auto take_train = [&](std::vector<std::size_t> pool) {
    shuffle(std::span(pool), rng);
    const std::size_t cut = static_cast<std::size_t>(
        (static_cast<std::uint64_t>(pool.size()) * options.train_numerator) /
        options.train_denominator);
    for (std::size_t k = 0; k < cut; ++k) in_train[pool[k]] = 1;
  };
  if (options.stratified) {
    for (int c = 0; c < 2; ++c) {
      std::vector<std::size_t> pool;
      for (auto i : by_class[c]) {
        if (!in_test[i]) pool.push_back(i);
      }
      std::sort(pool.begin(), pool.end());
      take_train(std::move(pool));
    }
  } else {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (!in_test[i]) pool.push_back(i);
    }
    take_train(std::move(pool));
  }

  SplitResult result;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (in_test[i]) {
      result.test.push_back(manifest[i]);
    } else if (in_train[i]) {
      result.train.push_back(manifest[i]);
    } else {
      result.val.push_back(manifest[i]);
    }
  }
  return result;
}

ImageLoader file_loader(std::filesystem::path base_dir) {
  return [base = std::move(base_dir)](const std::string& path) {
    const std::filesystem::path p(path);
    return read_image(p.is_absolute() || base.empty() ? p : base / p);
  };
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t run_seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(run_seed, epoch, 0x6F72646572ull));
  shuffle(std::span(order), rng);
  return order;
}

Tensor load_sample(const ManifestEntry& entry, std::size_t index, std::uint64_t epoch,
                   const ImageLoader& loader, const BatchOptions& options) {
  Raster raster;
  try {
    raster = loader(entry.path);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(entry.path, e.what());
  }
  FloatImage image = to_model_input(raster, options.input_size);
  if (options.augmentation) {
    image = augment(image, *options.augmentation, sample_seed(options.run_seed, epoch, index))
                .image;
  }
  return to_tensor(image, options.normalization);
}

BatchStream::BatchStream(std::span<const ManifestEntry> entries, ImageLoader loader,
                         BatchOptions options, std::uint64_t epoch)
    : entries_(entries),
      loader_(std::move(loader)),
      options_(std::move(options)),
      epoch_(epoch),
      order_(epoch_order(entries.size(), options_.run_seed, epoch)),
      batch_count_(0) {
  if (entries_.empty()) throw ArgumentError("batches: no entries");
  if (options_.batch_size == 0) throw ArgumentError("batches: batch_size must be >= 1");
  if (options_.augmentation) options_.augmentation->validate();
  batch_count_ = (entries_.size() + options_.batch_size - 1) / options_.batch_size;
}

Batch BatchStream::operator[](std::size_t batch_index) const {
  if (batch_index >= batch_count_) throw ArgumentError("batch index out of range");
  const std::size_t begin = batch_index * options_.batch_size;
  const std::size_t count = std::min(options_.batch_size, entries_.size() - begin);
  const std::size_t s = options_.input_size;
  const std::size_t sample_size = 3 * s * s;
  Batch batch{Tensor({count, 3, s, s}), std::vector<int>(count), std::vector<std::size_t>(count)};
  parallel_for(count, [&](std::size_t k) {
    const std::size_t index = order_[begin + k];
    const Tensor sample = load_sample(entries_[index], index, epoch_, loader_, options_);
    std::copy(sample.data().begin(), sample.data().end(),
              batch.inputs.data().begin() + static_cast<std::ptrdiff_t>(k * sample_size));
    batch.labels[k] = static_cast<int>(entries_[index].label);
    batch.indices[k] = index;
  });
  return batch;
}

std::vector<Batch> batches(std::span<const ManifestEntry> entries, const ImageLoader& loader,
                           const BatchOptions& options, std::uint64_t epoch) {
  BatchStream stream(entries, loader, options, epoch);
  std::vector<Batch> out;
  out.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) out.push_back(stream[i]);
  return out;
}

}  // namespace radiodx
