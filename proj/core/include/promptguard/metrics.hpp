#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptguard::metrics {

// Positive class is label 1 (malicious).
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct DegenerateFlags {
  bool precision = false;  // TP + FP == 0
  bool recall = false;     // TP + FN == 0
  bool f1 = false;         // P + R == 0

  bool any() const { return precision || recall || f1; }
  bool operator==(const DegenerateFlags&) const = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  DegenerateFlags degenerate;
};

// Throws UsageError on length mismatch or empty input.
ConfusionMatrix confusion(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred);

// Zero denominators give 0 with the matching degenerate flag set.
// Throws UsageError on an all-zero matrix.
MetricsReport report(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

// Threshold sweep over descending unique scores: (0,0), one point per unique
// score, ending at (1,1). Throws UsageError unless both classes are present.
std::vector<RocPoint> roc_curve(std::span<const std::uint8_t> y_true, std::span<const double> scores);

// Trapezoidal area. Throws UsageError unless points are sorted by fpr and run
// from (0,0) to (1,1).
double auc(std::span<const RocPoint> points);

// `fpr,tpr` with a header and 6 decimals per value.
void emit_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path);
std::vector<RocPoint> load_roc_csv(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const MetricsReport& report);
nlohmann::ordered_json to_json(const ConfusionMatrix& cm);

}  // namespace promptguard::metrics
