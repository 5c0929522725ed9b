#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "falldef/label.hpp"
#include "falldef/training.hpp"

namespace falldef {

/// Binary confusion counts with `positive` as the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  /// The same counts seen with the other class as positive.
  ConfusionMatrix swapped() const { return {tn, fn, tp, fp}; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> labels,
                          Label positive = Label::Fall);

// Zero denominators yield 0.
double accuracy(const ConfusionMatrix& cm);
double precision(std::uint64_t tp, std::uint64_t fp);
double recall(std::uint64_t tp, std::uint64_t fn);
double f1_score(double precision, double recall);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  bool operator==(const ClassMetrics&) const = default;
};

/// Metrics of the positive class of `cm`.
ClassMetrics class_metrics(const ConfusionMatrix& cm);

/// Support-weighted mean of precision, recall and f1; support is summed.
ClassMetrics weighted_average(std::span<const ClassMetrics> per_class);

struct EvalReport {
  ConfusionMatrix confusion;  // fall is positive
  ClassMetrics fall;
  ClassMetrics non_fall;
  ClassMetrics weighted_avg;
  double accuracy = 0.0;
  bool operator==(const EvalReport&) const = default;
};

EvalReport report_from_confusion(const ConfusionMatrix& cm);
EvalReport report(std::span<const Label> preds, std::span<const Label> labels);

// Report document (JSON):
//   {"format": "falldef-report", "format_version": 1,
//    "confusion": {"tp", "fp", "tn", "fn"},
//    "per_class": {"fall": {...}, "non-fall": {...}}, "weighted_avg": {...},
//    "accuracy": x, "instances": n,
//    "epoch_log": [{"epoch", "train_loss", "val_loss", "val_accuracy"}, ...],
//    "config": {...}}
inline constexpr int kReportFormatVersion = 1;

struct EmittedReport {
  EvalReport report;
  std::vector<EpochRecord> epoch_log;
  std::string config;  // JSON text, "{}" when absent
};

void emit_report(const EvalReport& report, std::span<const EpochRecord> epoch_log,
                 std::ostream& os, const std::string& config_json = {});
void emit_report(const EvalReport& report, std::span<const EpochRecord> epoch_log,
                 const std::filesystem::path& path, const std::string& config_json = {});
EmittedReport parse_report(std::istream& is);

/// Plain-text table in the layout of a classification report.
std::string format_report_table(const EvalReport& report);

}  // namespace falldef
