#include "radiodx/config.hpp"

#include <algorithm>
#include <vector>

#include <json.hpp>

#include "radiodx/errors.hpp"

namespace radiodx {

using nlohmann::json;

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.run_seed = seed;
  t.normalization = normalization;
  if (augmentation_enabled) {
    t.augmentation = augmentation;
  } else {
    t.augmentation.reset();
  }
  return t;
}

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ArgumentError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ArgumentError("config: '" + qualified(key) + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    const auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void allow(const char* key) { seen_.push_back(key); }

  void reject_unknown() const {
    for (const auto& [key, value] : object_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ArgumentError("config: unknown key '" + qualified(key) + "'");
      }
    }
  }

 private:
  const json& object_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <typename Parse>
auto parse_enum(const std::string& text, const std::string& key, Parse parse) {
  try {
    return parse(text);
  } catch (const ArgumentError& e) {
    throw ArgumentError("config: '" + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ArgumentError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  ObjectReader top(root, "");
  top.read("seed", cfg.seed);
  top.allow("command");
  top.allow("args");

  if (const json* node = top.child("model")) {
    ObjectReader r(*node, "model");
    std::string backbone(to_string(cfg.backbone)), normalization(to_string(cfg.normalization));
    r.read("backbone", backbone);
    r.read("input_size", cfg.input_size);
    r.read("init_seed", cfg.init_seed);
    r.read("normalization", normalization);
    if (const json* head = r.child("head")) {
      ObjectReader h(*head, "model.head");
      h.read("hidden", cfg.head.hidden);
      h.read("dropout", cfg.head.dropout);
      h.reject_unknown();
    }
    r.reject_unknown();
    cfg.backbone = parse_enum(backbone, "model.backbone", parse_backbone);
    cfg.normalization = parse_enum(normalization, "model.normalization", parse_normalization);
  }

  if (const json* node = top.child("train")) {
    ObjectReader r(*node, "train");
    std::string optimizer(to_string(cfg.train.optimizer)), early_stop = "none";
    r.read("epochs", cfg.train.epochs);
    r.read("batch_size", cfg.train.batch_size);
    r.read("learning_rate", cfg.train.learning_rate);
    r.read("optimizer", optimizer);
    r.read("beta1", cfg.train.beta1);
    r.read("beta2", cfg.train.beta2);
    r.read("epsilon", cfg.train.epsilon);
    r.read("early_stop", early_stop);
    r.reject_unknown();
    cfg.train.optimizer = parse_enum(optimizer, "train.optimizer", parse_optimizer);
    if (early_stop != "none") throw ArgumentError("config: 'train.early_stop' must be \"none\"");
  }

  if (const json* node = top.child("augmentation")) {
    ObjectReader r(*node, "augmentation");
    auto& a = cfg.augmentation;
    std::vector<double> zoom = {a.zoom_lo, a.zoom_hi};
    r.read("enabled", cfg.augmentation_enabled);
    r.read("rotation_max", a.rotation_max);
    r.read("shear_max", a.shear_max);
    r.read("shift_max", a.shift_max);
    r.read("zoom_range", zoom);
    r.read("fill_value", a.fill_value);
    r.reject_unknown();
    if (zoom.size() != 2) throw ArgumentError("config: 'augmentation.zoom_range' needs [lo, hi]");
    a.zoom_lo = zoom[0];
    a.zoom_hi = zoom[1];
  }

  if (const json* node = top.child("split")) {
    ObjectReader r(*node, "split");
    std::vector<std::uint64_t> fraction = {cfg.split.train_numerator, cfg.split.train_denominator};
    r.read("per_class_test", cfg.split.per_class_test);
    r.read("train_fraction", fraction);
    r.read("stratified", cfg.split.stratified);
    r.reject_unknown();
    if (fraction.size() != 2) {
      throw ArgumentError("config: 'split.train_fraction' needs [numerator, denominator]");
    }
    cfg.split.train_numerator = fraction[0];
    cfg.split.train_denominator = fraction[1];
  }

  if (const json* node = top.child("paths")) {
    ObjectReader r(*node, "paths");
    r.read("train_manifest", cfg.train_manifest);
    r.read("val_manifest", cfg.val_manifest);
    r.read("initial_weights", cfg.initial_weights);
    r.reject_unknown();
  }
  top.reject_unknown();

  cfg.split.seed = cfg.seed;
  cfg.train.run_seed = cfg.seed;
  if (cfg.input_size == 0) throw ArgumentError("config: 'model.input_size' must be positive");
  cfg.resolved_train().validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  RunConfig cfg = parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                                    bytes.size()));
  const auto base = std::filesystem::absolute(path).parent_path();
  for (std::string* p : {&cfg.train_manifest, &cfg.val_manifest, &cfg.initial_weights}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) {
      *p = (base / *p).lexically_normal().string();
    }
  }
  return cfg;
}

std::string run_config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = {{"backbone", std::string(to_string(c.backbone))},
                {"input_size", c.input_size},
                {"init_seed", c.init_seed},
                {"head", {{"hidden", c.head.hidden}, {"dropout", c.head.dropout}}},
                {"normalization", std::string(to_string(c.normalization))}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"optimizer", std::string(to_string(c.train.optimizer))},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"early_stop", "none"}};
  j["augmentation"] = {{"enabled", c.augmentation_enabled},
                       {"rotation_max", c.augmentation.rotation_max},
                       {"shear_max", c.augmentation.shear_max},
                       {"shift_max", c.augmentation.shift_max},
                       {"zoom_range", {c.augmentation.zoom_lo, c.augmentation.zoom_hi}},
                       {"fill_value", c.augmentation.fill_value}};
  j["split"] = {{"per_class_test", c.split.per_class_test},
                {"train_fraction", {c.split.train_numerator, c.split.train_denominator}},
                {"stratified", c.split.stratified}};
  j["paths"] = {{"train_manifest", c.train_manifest},
                {"val_manifest", c.val_manifest},
                {"initial_weights", c.initial_weights}};
  return j.dump(2) + "\n";
}

}  // namespace radiodx
