#include "radiodx/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "radiodx/config.hpp"
#include "radiodx/dataset.hpp"
#include "radiodx/errors.hpp"
#include "radiodx/evaluation.hpp"
#include "radiodx/gradcam.hpp"
#include "radiodx/imaging.hpp"
#include "radiodx/network.hpp"
#include "radiodx/parallel.hpp"
#include "radiodx/training.hpp"

namespace radiodx::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

void write_run_json(const fs::path& dir, const std::string& command, const json& args,
                    const RunConfig& config) {
  json j = json::parse(run_config_json(config));
  j["command"] = command;
  j["args"] = args;
  write_text(dir / "run.json", j.dump(2) + "\n");
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  try {
    return load_manifest(read_text(path));
  } catch (const ManifestError& e) {
    throw IoError(path.string(), e.what());
  }
}

fs::path base_dir(const fs::path& file) { return fs::absolute(file).parent_path(); }

Model model_from(const RunConfig& config) {
  return build_model(config.backbone, config.head, config.init_seed, config.input_size);
}

void load_weights_file(Model& model, const fs::path& path) {
  try {
    load_weights(model, read_file(path));
  } catch (const WeightsError& e) {
    throw IoError(path.string(), e.what());
  }
}

json counts_json(std::span<const ManifestEntry> entries) {
  const auto c = count_classes(entries);
  return {{"NORMAL", c.normal}, {"PNEUMONIA", c.pneumonia}, {"total", c.total()}};
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string manifest, out, config;
};

int analyze(const AnalyzeArgs& a, std::ostream& out) {
  const RunConfig config = config_or_default(a.config);
  const auto entries = read_manifest(a.manifest);
  const auto loader = file_loader(base_dir(a.manifest));
  const std::size_t size = config.input_size;
  MeanAccumulator means[2];
  constexpr std::size_t kChunk = 64;
  std::vector<FloatImage> chunk;
  for (std::size_t begin = 0; begin < entries.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, entries.size() - begin);
    chunk.assign(n, FloatImage{});
    parallel_for(n, [&](std::size_t k) {
      const auto& e = entries[begin + k];
      Raster raster;
      try {
        raster = loader(e.path);
      } catch (const IoError&) {
        throw;
      } catch (const std::exception& ex) {
        throw IoError(e.path, ex.what());
      }
      chunk[k] = resize_bilinear(to_grayscale(to_float_image(raster)), size, size);
    });
    for (std::size_t k = 0; k < n; ++k) {
      means[static_cast<int>(entries[begin + k].label)].add(chunk[k]);
    }
  }
  for (int c = 0; c < 2; ++c) {
    if (means[c].count() == 0) {
      throw ArgumentError("analyze: manifest has no " +
                          std::string(to_string(static_cast<Label>(c))) + " entries");
    }
  }
  const fs::path dir(a.out);
  make_dir(dir);
  const FloatImage normal = means[0].mean(), pneumonia = means[1].mean();
  write_pnm(dir / "mean_normal.pgm", to_raster(normal));
  write_pnm(dir / "mean_pneumonia.pgm", to_raster(pneumonia));
  write_pnm(dir / "diff.ppm", diff_image(normal, pneumonia));
  const json summary = {{"counts", counts_json(entries)}, {"size", size}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_run_json(dir, "analyze", {{"manifest", a.manifest}, {"out", a.out}}, config);
  out << "analyzed " << entries.size() << " images (" << means[0].count() << " NORMAL, "
      << means[1].count() << " PNEUMONIA)\n";
  return kOk;
}

struct SplitArgs {
  std::string manifest, out, config;
  std::uint64_t seed = 0;
};

int split(const SplitArgs& a, std::ostream& out) {
  RunConfig config = config_or_default(a.config);
  config.seed = a.seed;
  config.split.seed = a.seed;
  config.train.run_seed = a.seed;
  const auto entries = read_manifest(a.manifest);
  SplitResult result = split_dataset(entries, config.split);

  const fs::path dir(a.out);
  make_dir(dir);
  // Keep paths valid relative to the new manifests' location.
  const fs::path src_base = base_dir(a.manifest);
  const fs::path dst_base = fs::absolute(dir);
  for (auto* part : {&result.test, &result.train, &result.val}) {
    for (auto& e : *part) {
      const fs::path p(e.path);
      if (p.is_relative()) e.path = (src_base / p).lexically_normal().lexically_proximate(dst_base).generic_string();
    }
  }
  write_text(dir / "test.csv", write_manifest(result.test));
  write_text(dir / "train.csv", write_manifest(result.train));
  write_text(dir / "val.csv", write_manifest(result.val));
  const json summary = {
      {"seed", a.seed},
      {"per_class_test", config.split.per_class_test},
      {"train_fraction", {config.split.train_numerator, config.split.train_denominator}},
      {"stratified", config.split.stratified},
      {"counts",
       {{"test", counts_json(result.test)},
        {"train", counts_json(result.train)},
        {"val", counts_json(result.val)}}}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_run_json(dir, "split", {{"manifest", a.manifest}, {"seed", a.seed}, {"out", a.out}},
                 config);
  out << "test " << result.test.size() << ", train " << result.train.size() << ", val "
      << result.val.size() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, out;
};

int train(const TrainArgs& a, std::ostream& out) {
  const RunConfig config = load_run_config(a.config);
  const TrainConfig tc = config.resolved_train();
  Model model = model_from(config);
  if (!config.initial_weights.empty()) load_weights_file(model, config.initial_weights);

  std::vector<ManifestEntry> train_entries, val_entries;
  if (tc.epochs > 0) {
    if (config.train_manifest.empty() || config.val_manifest.empty()) {
      throw ArgumentError("train: paths.train_manifest and paths.val_manifest are required");
    }
    train_entries = read_manifest(config.train_manifest);
    val_entries = read_manifest(config.val_manifest);
  }
  // Train and validation manifests may live in different directories.
  const auto train_loader = file_loader(tc.epochs ? base_dir(config.train_manifest) : fs::path{});
  const auto val_loader = file_loader(tc.epochs ? base_dir(config.val_manifest) : fs::path{});
  std::vector<ManifestEntry> all = train_entries;
  for (auto e : val_entries) {
    e.path = "\x01" + e.path;
    all.push_back(std::move(e));
  }
  const ImageLoader loader = [&](const std::string& path) {
    return !path.empty() && path[0] == '\x01' ? val_loader(path.substr(1)) : train_loader(path);
  };
  std::span<const ManifestEntry> train_span(all.data(), train_entries.size());
  std::span<const ManifestEntry> val_span(all.data() + train_entries.size(), val_entries.size());

  const fs::path dir(a.out);
  make_dir(dir);
  const FitResult result = fit(model, train_span, val_span, tc, loader, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "/" << tc.epochs << "  loss " << fixed9(r.train_loss)
        << "  train_acc " << fixed9(r.train_accuracy) << "  val_acc " << fixed9(r.val_accuracy)
        << "\n";
  });
  write_file(dir / "best.rxw", save_weights(result.best));
  write_file(dir / "final.rxw", save_weights(model));
  write_text(dir / "history.csv", history_csv(result.history));
  write_text(dir / "history.svg", history_svg(result.history));
  if (!result.history.epochs.empty()) {
    const auto stats = history_stats(result.history);
    const json j = {{"val_accuracy",
                     {{"min", stats.min}, {"mean", stats.mean}, {"max", stats.max}, {"std", stats.std}}},
                    {"best_epoch", *result.best_epoch}};
    write_text(dir / "stats.json", j.dump(2) + "\n");
  }
  write_run_json(dir, "train", {{"config", a.config}, {"out", a.out}}, config);
  const auto counts = count_params(model);
  out << "parameters: total " << counts.total << ", trainable " << counts.trainable
      << ", frozen " << counts.frozen << "\n";
  return kOk;
}

struct EvaluateArgs {
  std::string weights, predictions, manifest, out, config;
};

struct PredictionRow {
  std::string path;
  int label;
  float probability;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<PredictionRow> rows;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "path,label,probability") {
        throw IoError(path.string(), "predictions header must be 'path,label,probability'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? c2 : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) {
      throw IoError(path.string(), "line " + std::to_string(line_no) + ": expected 3 columns");
    }
    const auto label = parse_label(line.substr(c1 + 1, c2 - c1 - 1));
    if (!label) throw IoError(path.string(), "line " + std::to_string(line_no) + ": bad label");
    char* end = nullptr;
    const std::string prob = line.substr(c2 + 1);
    const double p = std::strtod(prob.c_str(), &end);
    if (end == prob.c_str() || *end != '\0' || !(p >= 0.0 && p <= 1.0)) {
      throw IoError(path.string(), "line " + std::to_string(line_no) + ": bad probability");
    }
    rows.push_back({line.substr(0, c1), static_cast<int>(*label), static_cast<float>(p)});
  }
  return rows;
}

int evaluate(const EvaluateArgs& a, std::ostream& out) {
  const RunConfig config = config_or_default(a.config);
  std::vector<PredictionRow> rows;
  if (!a.predictions.empty()) {
    rows = read_predictions(a.predictions);
  } else {
    const auto entries = read_manifest(a.manifest);
    Model model = model_from(config);
    load_weights_file(model, a.weights);
    BatchOptions options;
    options.input_size = config.input_size;
    options.normalization = config.normalization;
    const BatchStream stream(entries, file_loader(base_dir(a.manifest)), options, 0);
    rows.resize(entries.size());
    for (std::size_t b = 0; b < stream.size(); ++b) {
      const Batch batch = stream[b];
      const auto probs = predict_batch(model, batch.inputs);
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const auto i = batch.indices[k];
        rows[i] = {entries[i].path, batch.labels[k], probs[k]};
      }
    }
  }
  std::vector<float> probs;
  std::vector<int> labels;
  std::string csv = "path,label,probability\n";
  for (const auto& r : rows) {
    probs.push_back(r.probability);
    labels.push_back(r.label);
    csv += r.path + "," + std::string(to_string(static_cast<Label>(r.label))) + "," +
           fixed9(r.probability) + "\n";
  }
  const ConfusionMatrix cm = confusion_matrix(probs, labels);
  const MetricsReport metrics = compute_metrics(cm);
  const fs::path dir(a.out);
  emit_report(cm, metrics, dir);
  write_text(dir / "predictions.csv", csv);
  json args = {{"out", a.out}};
  if (!a.predictions.empty()) args["predictions"] = a.predictions;
  if (!a.weights.empty()) args["weights"] = a.weights;
  if (!a.manifest.empty()) args["manifest"] = a.manifest;
  write_run_json(dir, "evaluate", args, config);
  out << "VN " << cm.vn << "  FP " << cm.fp << "  FN " << cm.fn << "  VP " << cm.vp << "\n"
      << metrics_csv(metrics);
  return kOk;
}

struct ExplainArgs {
  std::string weights, image, out, layer, config;
  double alpha = 0.4;
};

int explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig config = config_or_default(a.config);
  Model model = model_from(config);
  load_weights_file(model, a.weights);
  const Raster base = read_image(a.image);
  const Tensor input = to_tensor(to_model_input(base, config.input_size), config.normalization);
  std::optional<std::string_view> layer;
  if (!a.layer.empty()) layer = a.layer;
  const std::size_t target = gradcam_target(model, layer);
  const Heatmap heatmap = compute_gradcam(model, input, layer);
  const float p = predict(model, input);

  const fs::path dir(a.out);
  make_dir(dir);
  write_pnm(dir / "overlay.ppm", colorize_overlay(heatmap, base, OverlayParams{a.alpha}));
  write_pnm(dir / "heatmap.pgm", heatmap_raster(heatmap));
  const json summary = {{"probability", p},
                        {"label", std::string(to_string(p >= 0.5f ? Label::pneumonia : Label::normal))},
                        {"layer", model.layers()[target].spec.name},
                        {"all_zero", heatmap.all_zero}};
  write_text(dir / "explain.json", summary.dump(2) + "\n");
  json args = {{"weights", a.weights}, {"image", a.image}, {"out", a.out}, {"alpha", a.alpha}};
  if (!a.layer.empty()) args["layer"] = a.layer;
  write_run_json(dir, "explain", args, config);
  if (heatmap.all_zero) {
    err << "warning: Grad-CAM map is all zero (no positively weighted activation)\n";
  }
  out << to_string(p >= 0.5f ? Label::pneumonia : Label::normal) << "\t" << fixed9(p) << "\n";
  return kOk;
}

struct PredictArgs {
  std::string weights, image, config, out;
};

int predict_cmd(const PredictArgs& a, std::ostream& out) {
  const RunConfig config = config_or_default(a.config);
  Model model = model_from(config);
  load_weights_file(model, a.weights);
  const Raster raster = read_image(a.image);
  const float p =
      predict(model, to_tensor(to_model_input(raster, config.input_size), config.normalization));
  const Label label = p >= 0.5f ? Label::pneumonia : Label::normal;
  out << to_string(label) << "\t" << fixed9(p) << "\n";
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    make_dir(dir);
    const json j = {{"label", std::string(to_string(label))}, {"probability", p}};
    write_text(dir / "prediction.json", j.dump(2) + "\n");
    write_run_json(dir, "predict", {{"weights", a.weights}, {"image", a.image}, {"out", a.out}},
                   config);
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chest radiograph pneumonia classifier: data preparation, training, "
               "evaluation and Grad-CAM explanations", "radiodx"};
  app.require_subcommand(1);

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-class mean images and their difference");
  analyze_cmd->add_option("--manifest", analyze_args.manifest, "Manifest CSV")->required();
  analyze_cmd->add_option("--out", analyze_args.out, "Output directory")->required();
  analyze_cmd->add_option("--config", analyze_args.config, "Run config JSON");

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Test/train/validation split");
  split_cmd->add_option("--manifest", split_args.manifest, "Manifest CSV")->required();
  split_cmd->add_option("--seed", split_args.seed, "Split seed")->required();
  split_cmd->add_option("--out", split_args.out, "Output directory")->required();
  split_cmd->add_option("--config", split_args.config, "Run config JSON");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier head");
  train_cmd->add_option("--config", train_args.config, "Run config JSON")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Confusion matrix and metrics");
  auto* w_opt = eval_cmd->add_option("--weights", eval_args.weights, "RXW1 weights");
  auto* p_opt = eval_cmd->add_option("--predictions", eval_args.predictions,
                                     "Precomputed predictions CSV (path,label,probability)");
  w_opt->excludes(p_opt);
  eval_cmd->add_option("--manifest", eval_args.manifest, "Manifest CSV");
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--config", eval_args.config, "Run config JSON");

  ExplainArgs explain_args;
  auto* explain_cmd = app.add_subcommand("explain", "Grad-CAM overlay for one image");
  explain_cmd->add_option("--weights", explain_args.weights, "RXW1 weights")->required();
  explain_cmd->add_option("--image", explain_args.image, "Input image")->required();
  explain_cmd->add_option("--out", explain_args.out, "Output directory")->required();
  explain_cmd->add_option("--layer", explain_args.layer, "Target conv layer (glob)");
  explain_cmd->add_option("--alpha", explain_args.alpha, "Overlay opacity")
      ->check(CLI::Range(0.0, 1.0));
  explain_cmd->add_option("--config", explain_args.config, "Run config JSON");

  PredictArgs predict_args;
  auto* predict_sub = app.add_subcommand("predict", "Classify one image");
  predict_sub->add_option("--weights", predict_args.weights, "RXW1 weights")->required();
  predict_sub->add_option("--image", predict_args.image, "Input image")->required();
  predict_sub->add_option("--config", predict_args.config, "Run config JSON");
  predict_sub->add_option("--out", predict_args.out, "Optional output directory");

  try {
    app.parse(argc, argv);
    if (eval_cmd->parsed()) {
      if (eval_args.weights.empty() && eval_args.predictions.empty()) {
        throw CLI::RequiredError("--weights or --predictions");
      }
      if (!eval_args.weights.empty() && eval_args.manifest.empty()) {
        throw CLI::RequiredError("--manifest");
      }
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (analyze_cmd->parsed()) return analyze(analyze_args, out);
    if (split_cmd->parsed()) return split(split_args, out);
    if (train_cmd->parsed()) return train(train_args, out);
    if (eval_cmd->parsed()) return evaluate(eval_args, out);
    if (explain_cmd->parsed()) return explain(explain_args, out, err);
    if (predict_sub->parsed()) return predict_cmd(predict_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace radiodx::cli
