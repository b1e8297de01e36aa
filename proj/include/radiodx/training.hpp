#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radiodx/augmentation.hpp"
#include "radiodx/dataset.hpp"
#include "radiodx/network.hpp"

namespace radiodx {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t run_seed = 0;
  /// Applied to training samples only; nullopt disables augmentation.
  std::optional<AugmentationPolicy> augmentation = AugmentationPolicy{};
  Normalization normalization = Normalization::unit;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

struct HistoryStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double std = 0.0;  ///< population standard deviation
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One update rule applied to every trainable parameter. Moment buffers are
/// created only for parameters that are trainable when step() runs.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config);
  void step(Model& model);
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, epsilon_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

struct FitResult {
  Model best;
  TrainingHistory history;
  std::optional<std::size_t> best_epoch;  ///< 1-based; empty when no epoch ran
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training. Each batch takes one optimizer step on the mean
/// binary cross-entropy; after each epoch the validation accuracy at
/// threshold 0.5 is measured and the best model (ties to the earliest epoch)
/// is retained. `model` ends holding the final weights.
FitResult fit(Model& model, std::span<const ManifestEntry> train,
              std::span<const ManifestEntry> val, const TrainConfig& config,
              const ImageLoader& loader, const EpochCallback& on_epoch = {});

/// Fraction of entries whose thresholded prediction matches the label.
double accuracy(const Model& model, std::span<const ManifestEntry> entries,
                const ImageLoader& loader, Normalization normalization,
                std::size_t batch_size = 32);

HistoryStats history_stats(const TrainingHistory& history);

/// `epoch,train_loss,train_acc,val_acc` with 9-decimal fixed values.
std::string history_csv(const TrainingHistory& history);

/// Line chart of train and validation accuracy per epoch.
std::string history_svg(const TrainingHistory& history);

}  // namespace radiodx
