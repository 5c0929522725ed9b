#include "falldef/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "falldef/error.hpp"
#include "falldef/text_format.hpp"
#include "json.hpp"

namespace falldef {

using json = nlohmann::json;

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> labels,
                          Label positive) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "confusion: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorKind::EmptyInput, "confusion: no instances to score");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool y = labels[i] == positive;
    if (p && y) ++cm.tp;
    else if (p) ++cm.fp;
    else if (y) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t n = cm.total();
  return n == 0 ? 0.0 : static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
}

double precision(std::uint64_t tp, std::uint64_t fp) {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall(std::uint64_t tp, std::uint64_t fn) {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f1_score(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  ClassMetrics m;
  m.precision = precision(cm.tp, cm.fp);
  m.recall = recall(cm.tp, cm.fn);
  m.f1 = f1_score(m.precision, m.recall);
  m.support = cm.tp + cm.fn;
  return m;
}

ClassMetrics weighted_average(std::span<const ClassMetrics> per_class) {
  ClassMetrics out;
  for (const auto& c : per_class) out.support += c.support;
  if (out.support == 0) return out;
  const double total = static_cast<double>(out.support);
  for (const auto& c : per_class) {
    const double w = static_cast<double>(c.support);
    out.precision += w * c.precision;
    out.recall += w * c.recall;
    out.f1 += w * c.f1;
  }
  out.precision /= total;
  out.recall /= total;
  out.f1 /= total;
  return out;
}

EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::EmptyInput, "report: no instances to score");
  EvalReport r;
  r.confusion = cm;
  r.fall = class_metrics(cm);
  r.non_fall = class_metrics(cm.swapped());
  const ClassMetrics both[] = {r.non_fall, r.fall};
  r.weighted_avg = weighted_average(both);
  r.accuracy = accuracy(cm);
  return r;
}

EvalReport report(std::span<const Label> preds, std::span<const Label> labels) {
  return report_from_confusion(confusion(preds, labels, Label::Fall));
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kFormatName = "falldef-report";

json metrics_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

ClassMetrics metrics_from(const json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
          j.at("support").get<std::uint64_t>()};
}

}  // namespace

void emit_report(const EvalReport& r, std::span<const EpochRecord> epoch_log, std::ostream& os,
                 const std::string& config_json) {
  if (r.confusion.total() == 0) {
    throw Error(ErrorKind::EmptyInput, "refusing to emit a report over zero instances");
  }
  json doc;
  doc["format"] = kFormatName;
  doc["format_version"] = kReportFormatVersion;
  doc["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn},
                      {"fn", r.confusion.fn}};
  doc["per_class"] = {{"fall", metrics_json(r.fall)}, {"non-fall", metrics_json(r.non_fall)}};
  doc["weighted_avg"] = metrics_json(r.weighted_avg);
  doc["accuracy"] = r.accuracy;
  doc["instances"] = r.confusion.total();
  json log = json::array();
  for (const auto& e : epoch_log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss},
                   {"val_accuracy", e.val_accuracy}});
  }
  doc["epoch_log"] = std::move(log);
  doc["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  os << doc.dump(2) << "\n";
  if (!os) throw Error(ErrorKind::Io, "failed writing report");
}

void emit_report(const EvalReport& r, std::span<const EpochRecord> epoch_log,
                 const std::filesystem::path& path, const std::string& config_json) {
  std::ostringstream buf;
  emit_report(r, epoch_log, buf, config_json);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << buf.str();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

EmittedReport parse_report(std::istream& is) {
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorKind::Parse, "report is not a JSON object");
  }
  if (doc.value("format", std::string()) != kFormatName) {
    throw Error(ErrorKind::Parse, "not a falldef report", "format");
  }
  if (doc.value("format_version", -1) != kReportFormatVersion) {
    throw Error(ErrorKind::Version, "unsupported report format_version", "format_version");
  }
  EmittedReport out;
  try {
    const json& c = doc.at("confusion");
    out.report.confusion = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(),
                            c.at("tn").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>()};
    out.report.fall = metrics_from(doc.at("per_class").at("fall"));
    out.report.non_fall = metrics_from(doc.at("per_class").at("non-fall"));
    out.report.weighted_avg = metrics_from(doc.at("weighted_avg"));
    out.report.accuracy = doc.at("accuracy").get<double>();
    for (const json& e : doc.at("epoch_log")) {
      out.epoch_log.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                               e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>()});
    }
    out.config = doc.at("config").dump();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed report: ") + e.what());
  }
  return out;
}

std::string format_report_table(const EvalReport& r) {
  char buf[160];
  std::string out = "class           precision  recall     f1         support\n";
  auto row = [&](const char* name, const ClassMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-15s %-10.3f %-10.3f %-10.3f %llu\n", name, m.precision,
                  m.recall, m.f1, static_cast<unsigned long long>(m.support));
    out += buf;
  };
  row("non-fall", r.non_fall);
  row("fall", r.fall);
  row("weighted avg.", r.weighted_avg);
  std::snprintf(buf, sizeof buf, "accuracy        %.1f%%\n", 100.0 * r.accuracy);
  out += buf;
  std::snprintf(buf, sizeof buf, "confusion       tp=%llu fp=%llu tn=%llu fn=%llu\n",
                static_cast<unsigned long long>(r.confusion.tp),
                static_cast<unsigned long long>(r.confusion.fp),
                static_cast<unsigned long long>(r.confusion.tn),
                static_cast<unsigned long long>(r.confusion.fn));
  out += buf;
  return out;
}

}  // namespace falldef
