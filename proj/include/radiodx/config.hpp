#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "radiodx/dataset.hpp"
#include "radiodx/imaging.hpp"
#include "radiodx/network.hpp"
#include "radiodx/training.hpp"

namespace radiodx {

/// Everything a run depends on. Serialized as JSON:
///
///   {
///     "seed": 0,
///     "model": {"backbone": "vgg19", "input_size": 224, "init_seed": 0,
///               "head": {"hidden": [1024, 256], "dropout": 0.0},
///               "normalization": "unit"},
///     "train": {"epochs": 150, "batch_size": 32, "learning_rate": 1e-4,
///               "optimizer": "adam", "beta1": 0.9, "beta2": 0.999,
///               "epsilon": 1e-8, "early_stop": "none"},
///     "augmentation": {"enabled": true, "rotation_max": 15, "shear_max": 10,
///                      "shift_max": 0.1, "zoom_range": [0.9, 1.1],
///                      "fill_value": 0.0},
///     "split": {"per_class_test": 150, "train_fraction": [4, 5],
///               "stratified": false},
///     "paths": {"train_manifest": "", "val_manifest": "",
///               "initial_weights": ""}
///   }
///
/// Missing keys take the defaults above; unknown keys are rejected. The
/// top-level keys "command" and "args" are accepted and ignored so that an
/// emitted run.json can be fed back in as a config.
struct RunConfig {
  std::uint64_t seed = 0;

  Backbone backbone = Backbone::vgg19;
  std::size_t input_size = kModelInputSize;
  std::uint64_t init_seed = 0;
  HeadSpec head;
  Normalization normalization = Normalization::unit;

  TrainConfig train;  ///< run_seed mirrors `seed`, augmentation mirrors below
  AugmentationPolicy augmentation;
  bool augmentation_enabled = true;

  SplitOptions split;  ///< split.seed mirrors `seed`

  std::string train_manifest;
  std::string val_manifest;
  std::string initial_weights;

  /// TrainConfig with the seed, augmentation and normalization filled in.
  TrainConfig resolved_train() const;
};

/// Throws ArgumentError naming the offending key.
RunConfig parse_run_config(std::string_view json_text);

/// Reads a config file; relative paths inside it are resolved against the
/// file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty-printed JSON with every field present.
std::string run_config_json(const RunConfig& config);

}  // namespace radiodx
