#include "radiodx/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "radiodx/errors.hpp"
#include "radiodx/random.hpp"

namespace radiodx {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ArgumentError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ArgumentError("learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ArgumentError("adam needs 0 <= beta < 1 and epsilon > 0");
  }
  if (augmentation) augmentation->validate();
}

Optimizer::Optimizer(const TrainConfig& config)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon) {}

void Optimizer::step(Model& model) {
  ++steps_;
  const auto t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(beta1_, t);
  const double correction2 = 1.0 - std::pow(beta2_, t);
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto lr = static_cast<float>(lr_);
  for (auto& np : named_parameters(model)) {
    Parameter& p = *np.param;
    if (!p.trainable) continue;
    auto value = p.value.data();
    const auto grad = p.grad.data();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
      continue;
    }
    auto& moments = state_[np.name];
    if (moments.m.size() != value.size()) {
      moments.m.assign(value.size(), 0.0f);
      moments.v.assign(value.size(), 0.0f);
    }
    const auto step_size = static_cast<float>(lr_ / correction1);
    const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(correction2));
    const auto eps = static_cast<float>(epsilon_);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const float g = grad[i];
      moments.m[i] = b1 * moments.m[i] + (1.0f - b1) * g;
      moments.v[i] = b2 * moments.v[i] + (1.0f - b2) * g * g;
      value[i] -= step_size * moments.m[i] / (std::sqrt(moments.v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

namespace {

bool ends_in_sigmoid(const Model& model) {
  const auto layers = model.layers();
  return layers.size() >= 2 && layers.back().spec.kind == LayerKind::activation &&
         layers.back().spec.activation == ops::Activation::sigmoid;
}

std::size_t model_input_size(const Model& model) {
  const auto& in = model.input_shape();
  if (in.size() != 3 || in[0] != 3 || in[1] != in[2]) {
    throw ShapeError("training needs a square 3-channel image model, got input " + to_string(in));
  }
  return in[1];
}

}  // namespace

double accuracy(const Model& model, std::span<const ManifestEntry> entries,
                const ImageLoader& loader, Normalization normalization, std::size_t batch_size) {
  if (entries.empty()) throw ArgumentError("accuracy: no entries");
  BatchOptions options;
  options.batch_size = batch_size;
  options.input_size = model_input_size(model);
  options.normalization = normalization;
  BatchStream stream(entries, loader, options, 0);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < stream.size(); ++b) {
    const Batch batch = stream[b];
    const auto probs = predict_batch(model, batch.inputs);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      correct += static_cast<int>(probs[k] >= 0.5f) == batch.labels[k];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(entries.size());
}

FitResult fit(Model& model, std::span<const ManifestEntry> train,
              std::span<const ManifestEntry> val, const TrainConfig& config,
              const ImageLoader& loader, const EpochCallback& on_epoch) {
  config.validate();
  FitResult result{model, {}, std::nullopt};
  if (config.epochs == 0) return result;
  if (train.empty() || val.empty()) throw ArgumentError("fit needs training and validation entries");

  BatchOptions options;
  options.batch_size = config.batch_size;
  options.run_seed = config.run_seed;
  options.augmentation = config.augmentation;
  options.input_size = model_input_size(model);
  options.normalization = config.normalization;

  const bool fused = ends_in_sigmoid(model);
  const std::size_t top = fused ? model.size() - 2 : model.size() - 1;
  Optimizer optimizer(config);
  double best_val = -1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    BatchStream stream(train, loader, options, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::size_t sample_size = checked_volume(model.input_shape());
    for (std::size_t b = 0; b < stream.size(); ++b) {
      const Batch batch = stream[b];
      const std::size_t count = batch.labels.size();
      const float scale = 1.0f / static_cast<float>(count);
      model.zero_grad();
      for (std::size_t k = 0; k < count; ++k) {
        const auto first = batch.inputs.data().begin() + static_cast<std::ptrdiff_t>(k * sample_size);
        Tensor input(model.input_shape(),
                     std::vector<float>(first, first + static_cast<std::ptrdiff_t>(sample_size)));
        ForwardOptions fwd;
        fwd.training = true;
        fwd.dropout_seed = mix_seed(sample_seed(config.run_seed, epoch, batch.indices[k]),
                                    0x64726F70ull);
        const ForwardTrace trace = forward_trace(model, input, fwd);
        const float p = trace.probability();
        const int y = batch.labels[k];
        const auto bce = ops::bce_loss(p, y);
        if (!std::isfinite(bce.loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", batch " + std::to_string(b + 1));
        }
        loss_sum += bce.loss;
        correct += static_cast<int>(p >= 0.5f) == y;
        // Sigmoid and cross-entropy combine to dL/dlogit = p - y.
        const Tensor grad({1}, {fused ? p - static_cast<float>(y) : bce.gradient});
        accumulate_gradients(model, trace, top, grad, scale);
      }
      optimizer.step(model);
    }
    EpochRecord record;
    record.epoch = epoch + 1;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    record.val_accuracy = accuracy(model, val, loader, config.normalization, config.batch_size);
    if (!std::isfinite(record.train_loss)) {
      throw TrainingError("non-finite mean loss at epoch " + std::to_string(epoch + 1));
    }
    result.history.epochs.push_back(record);
    if (record.val_accuracy > best_val) {
      best_val = record.val_accuracy;
      result.best = model;
      result.best_epoch = record.epoch;
    }
    if (on_epoch) on_epoch(record);
  }
  return result;
}

HistoryStats history_stats(const TrainingHistory& history) {
  if (history.epochs.empty()) throw ArgumentError("history_stats: empty history");
  HistoryStats stats;
  stats.min = stats.max = history.epochs.front().val_accuracy;
  double sum = 0.0;
  for (const auto& r : history.epochs) {
    stats.min = std::min(stats.min, r.val_accuracy);
    stats.max = std::max(stats.max, r.val_accuracy);
    sum += r.val_accuracy;
  }
  const auto n = static_cast<double>(history.epochs.size());
  stats.mean = sum / n;
  double sq = 0.0;
  for (const auto& r : history.epochs) sq += (r.val_accuracy - stats.mean) * (r.val_accuracy - stats.mean);
  stats.std = std::sqrt(sq / n);
  // Rounding in the mean can leave it a hair outside [min, max].
  stats.mean = std::clamp(stats.mean, stats.min, stats.max);
  return stats;
}

namespace {

std::string fixed(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string history_csv(const TrainingHistory& history) {
  std::string out = "epoch,train_loss,train_acc,val_acc\n";
  for (const auto& r : history.epochs) {
    out += std::to_string(r.epoch) + "," + fixed(r.train_loss) + "," + fixed(r.train_accuracy) +
           "," + fixed(r.val_accuracy) + "\n";
  }
  return out;
}

std::string history_svg(const TrainingHistory& history) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const std::size_t n = history.epochs.size();
  auto x_of = [&](std::size_t epoch) {
    return kLeft + (n <= 1 ? 0.0 : plot_w * static_cast<double>(epoch - 1) / static_cast<double>(n - 1));
  };
  auto y_of = [&](double acc) { return kTop + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };
  auto polyline = [&](auto field, const char* color) {
    std::string pts;
    for (const auto& r : history.epochs) {
      if (!pts.empty()) pts += ' ';
      pts += fixed(x_of(r.epoch), 2) + "," + fixed(y_of(field(r)), 2);
    }
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << "Accuracy during training</text>\n";
  svg << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double acc = tick / 10.0;
    svg << "  <text x=\"" << kLeft - 8 << "\" y=\"" << fixed(y_of(acc) + 4, 2)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fixed(acc, 1) << "</text>\n";
  }
  if (n > 0) {
    svg << "  <text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">1</text>\n";
    svg << "  <text x=\"" << kLeft + plot_w << "\" y=\"" << kTop + plot_h + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << n << "</text>\n";
  }
  svg << "  <text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">Epoch</text>\n";
  svg << "  <text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" "
      << "font-size=\"13\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\">Accuracy</text>\n";
  if (n > 0) {
    svg << polyline([](const EpochRecord& r) { return r.train_accuracy; }, "#1f77b4");
    svg << polyline([](const EpochRecord& r) { return r.val_accuracy; }, "#ff7f0e");
  }
  svg << "  <text x=\"" << kLeft + plot_w - 120 << "\" y=\"" << kTop + plot_h - 30
      << "\" font-size=\"12\" fill=\"#1f77b4\">train</text>\n";
  svg << "  <text x=\"" << kLeft + plot_w - 120 << "\" y=\"" << kTop + plot_h - 14
      << "\" font-size=\"12\" fill=\"#ff7f0e\">validation</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace radiodx
