#include "radiodx/evaluation.hpp"

#include <cstdio>
#include <cstdlib>
#include <utility>
#include <vector>

#include "radiodx/errors.hpp"
#include "radiodx/imaging.hpp"

namespace radiodx {

ConfusionMatrix confusion_matrix(std::span<const float> predictions, std::span<const int> labels,
                                 double threshold) {
  if (predictions.size() != labels.size()) {
    throw ArgumentError("confusion_matrix: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ArgumentError("confusion_matrix: no samples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool positive = static_cast<double>(predictions[i]) >= threshold;
    if (labels[i] != 0 && labels[i] != 1) throw ArgumentError("labels must be 0 or 1");
    if (labels[i]) {
      (positive ? cm.vp : cm.fn)++;
    } else {
      (positive ? cm.fp : cm.vn)++;
    }
  }
  return cm;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> harmonic(std::optional<double> a, std::optional<double> b) {
  if (!a || !b || *a + *b == 0.0) return std::nullopt;
  return 2.0 * *a * *b / (*a + *b);
}

const std::pair<const char*, std::optional<double> MetricsReport::*> kRows[] = {
    {"sens", &MetricsReport::sens}, {"esp", &MetricsReport::esp}, {"vpp", &MetricsReport::vpp},
    {"vpn", &MetricsReport::vpn},   {"acc", &MetricsReport::acc}, {"f1", &MetricsReport::f1},
};

}  // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  MetricsReport m;
  m.sens = ratio(cm.vp, cm.vp + cm.fn);
  m.esp = ratio(cm.vn, cm.vn + cm.fp);
  m.vpp = ratio(cm.vp, cm.vp + cm.fp);
  m.vpn = ratio(cm.vn, cm.vn + cm.fn);
  m.acc = ratio(cm.vp + cm.vn, cm.total());
  m.f1 = harmonic(m.vpp, m.sens);
  m.f1_specificity_variant = harmonic(m.esp, m.sens);
  return m;
}

std::string metrics_csv(const MetricsReport& metrics) {
  std::string out = "metric,value\n";
  for (const auto& [name, field] : kRows) {
    out += name;
    out += ',';
    if (const auto& v = metrics.*field) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9f", *v);
      out += buf;
    } else {
      out += "NA";
    }
    out += '\n';
  }
  return out;
}

MetricsReport parse_metrics_csv(std::string_view csv) {
  MetricsReport m;
  std::size_t line_no = 0;
  while (!csv.empty()) {
    const auto eol = csv.find('\n');
    std::string_view line = csv.substr(0, eol);
    csv = eol == std::string_view::npos ? std::string_view{} : csv.substr(eol + 1);
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ArgumentError("metrics line without comma");
    const auto name = line.substr(0, comma);
    const std::string value(line.substr(comma + 1));
    bool known = false;
    for (const auto& [row, field] : kRows) {
      if (name != row) continue;
      known = true;
      if (value != "NA") {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0') {
          throw ArgumentError("bad metric value '" + value + "'");
        }
        m.*field = v;
      }
    }
    if (!known) throw ArgumentError("unknown metric '" + std::string(name) + "'");
  }
  m.f1_specificity_variant = harmonic(m.esp, m.sens);
  return m;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  return std::to_string(cm.vn) + "," + std::to_string(cm.fp) + "\n" + std::to_string(cm.fn) +
         "," + std::to_string(cm.vp) + "\n";
}

void emit_report(const ConfusionMatrix& cm, const MetricsReport& metrics,
                 const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError(directory.string(), ec.message());
  write_text(directory / "metrics.csv", metrics_csv(metrics));
  write_text(directory / "confusion.csv", confusion_csv(cm));

  std::string notes;
  notes += "confusion.csv: rows are the true class (NORMAL, PNEUMONIA), columns the predicted\n";
  notes += "class (NORMAL, PNEUMONIA). Positive class is PNEUMONIA; threshold 0.5 inclusive.\n\n";
  notes += "Metric definitions:\n";
  notes += "  sens = VP/(VP+FN)   esp = VN/(VN+FP)   vpp = VP/(VP+FP)\n";
  notes += "  vpn  = VN/(VN+FN)   acc = (VP+VN)/(VP+VN+FP+FN)\n";
  notes += "  f1   = 2*vpp*sens/(vpp+sens)\n";
  notes += "Some published formula sheets print vpn as FN/(FN+VN) and acc as VP*VN/total; those\n";
  notes += "forms are not proportions of the intended quantities and are not used here.\n";
  char buf[128];
  if (metrics.f1_specificity_variant) {
    std::snprintf(buf, sizeof buf, "f1_esp_sens = 2*esp*sens/(esp+sens) = %.9f\n",
                  *metrics.f1_specificity_variant);
  } else {
    std::snprintf(buf, sizeof buf, "f1_esp_sens = NA\n");
  }
  notes += buf;
  write_text(directory / "notes.txt", notes);
}

}  // namespace radiodx
