#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace radiodx {

/// Counts against ground truth; the positive class is PNEUMONIA.
struct ConfusionMatrix {
  std::uint64_t vp = 0;  ///< true positive
  std::uint64_t vn = 0;  ///< true negative
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return vp + vn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Predicted positive iff probability >= threshold. Labels are 0/1.
ConfusionMatrix confusion_matrix(std::span<const float> predictions, std::span<const int> labels,
                                 double threshold = 0.5);

/// Metrics whose denominator is zero are left empty.
struct MetricsReport {
  std::optional<double> sens;  ///< vp / (vp + fn)
  std::optional<double> esp;   ///< vn / (vn + fp)
  std::optional<double> vpp;   ///< vp / (vp + fp)
  std::optional<double> vpn;   ///< vn / (vn + fn)
  std::optional<double> acc;   ///< (vp + vn) / total
  std::optional<double> f1;    ///< harmonic mean of vpp and sens
  /// Harmonic mean of esp and sens, reported alongside f1.
  std::optional<double> f1_specificity_variant;
};

MetricsReport compute_metrics(const ConfusionMatrix& cm);

/// `metric,value` rows in the order sens, esp, vpp, vpn, acc, f1; values in
/// 9-decimal fixed point, absent values written as `NA`.
std::string metrics_csv(const MetricsReport& metrics);
MetricsReport parse_metrics_csv(std::string_view csv);

/// Two rows (true NORMAL, true PNEUMONIA) by two columns (predicted NORMAL,
/// predicted PNEUMONIA).
std::string confusion_csv(const ConfusionMatrix& cm);

/// Writes metrics.csv, confusion.csv and notes.txt into `directory`.
void emit_report(const ConfusionMatrix& cm, const MetricsReport& metrics,
                 const std::filesystem::path& directory);

}  // namespace radiodx
