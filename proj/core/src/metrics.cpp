#include "promptguard/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "promptguard/error.hpp"

namespace promptguard::metrics {

ConfusionMatrix confusion(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred) {
  if (y_true.size() != y_pred.size()) throw UsageError("y_true and y_pred lengths differ");
  if (y_true.empty()) throw UsageError("confusion matrix of an empty evaluation set");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool actual = y_true[i] == 1;
    const bool predicted = y_pred[i] == 1;
    if (actual && predicted) ++cm.tp;
    else if (!actual && !predicted) ++cm.tn;
    else if (!actual && predicted) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("metrics report of an empty confusion matrix");
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.tp + cm.fp == 0) {
    r.degenerate.precision = true;
  } else {
    r.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  }
  if (cm.tp + cm.fn == 0) {
    r.degenerate.recall = true;
  } else {
    r.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  }
  if (r.precision + r.recall == 0.0) {
    r.degenerate.f1 = true;
  } else {
    r.f1 = 2.0 * (r.precision * r.recall) / (r.precision + r.recall);
  }
  return r;
}

std::vector<RocPoint> roc_curve(std::span<const std::uint8_t> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size()) throw UsageError("labels and scores lengths differ");
  const auto positives = static_cast<std::size_t>(std::count(y_true.begin(), y_true.end(), 1));
  const std::size_t negatives = y_true.size() - positives;
  if (positives == 0 || negatives == 0) throw UsageError("ROC curve needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> points{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (y_true[order[k]] == 1 ? tp : fp)++;
      ++k;
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                      static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return points;
}

double auc(std::span<const RocPoint> points) {
  if (points.size() < 2) throw UsageError("ROC curve needs at least two points");
  if (points.front() != RocPoint{0.0, 0.0}) throw UsageError("ROC curve must start at (0,0)");
  if (points.back() != RocPoint{1.0, 1.0}) throw UsageError("ROC curve must end at (1,1)");
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = points[i].fpr - points[i - 1].fpr;
    if (dx < 0.0) throw UsageError("ROC points are not sorted by fpr");
    area += dx * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

void emit_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write ROC file: " + path.string());
  out << "fpr,tpr\n";
  char line[64];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.6f,%.6f\n", p.fpr, p.tpr);
    out << line;
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<RocPoint> load_roc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open ROC file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "fpr,tpr") throw FormatError("ROC file has no fpr,tpr header");
  std::vector<RocPoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    RocPoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf", &p.fpr, &p.tpr) != 2) {
      throw FormatError("bad ROC row at line " + std::to_string(line_no));
    }
    points.push_back(p);
  }
  return points;
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
  j["degenerate_flags"] = {
      {"precision", r.degenerate.precision},
      {"recall", r.degenerate.recall},
      {"f1", r.degenerate.f1},
  };
  return j;
}

nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}};
}

}  // namespace promptguard::metrics
