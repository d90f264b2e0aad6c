#pragma once

// Dataset-level evaluation report: per-sequence metrics plus their mean,
// written as JSON (schema-versioned) and CSV.

#include "tomp/eval/dataset.hpp"
#include "tomp/eval/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

inline constexpr int kReportSchemaVersion = 1;

struct SequenceMetrics {
  std::string name;
  int frames = 0;
  double success_auc = 0.0;
  double precision = 0.0;  // at 20 px
  double norm_precision_auc = 0.0;
  double mean_iou = 0.0;
  Curve success;
  Curve precision_curve;
  Curve norm_precision;
};

struct MetricReport {
  std::string label;
  std::vector<SequenceMetrics> sequences;  // sorted by name
  SequenceMetrics aggregate;               // means over sequences; curves averaged pointwise
};

inline SequenceMetrics evaluate_sequence(const std::string& name, const std::vector<BoxXYWH>& pred,
                                         const std::vector<BoxXYWH>& gt) {
  SequenceMetrics m;
  m.name = name;
  m.frames = static_cast<int>(gt.size());
  m.success = success_curve(pred, gt);
  m.precision_curve = tomp::precision_curve(pred, gt);
  m.norm_precision = norm_precision_curve(pred, gt);
  m.success_auc = m.success.auc;
  m.precision = precision_at(pred, gt);
  m.norm_precision_auc = m.norm_precision.auc;
  m.mean_iou = tomp::mean_iou(pred, gt);
  return m;
}

inline MetricReport aggregate_report(std::vector<SequenceMetrics> seqs, std::string label = "") {
  if (seqs.empty()) throw std::invalid_argument("aggregate_report: no sequences");
  std::sort(seqs.begin(), seqs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  MetricReport r;
  r.label = std::move(label);
  auto& a = r.aggregate;
  a.name = "mean";
  a.success = seqs.front().success;
  a.precision_curve = seqs.front().precision_curve;
  a.norm_precision = seqs.front().norm_precision;
  for (auto* c : {&a.success, &a.precision_curve, &a.norm_precision}) std::fill(c->values.begin(), c->values.end(), 0.0);
  const double n = static_cast<double>(seqs.size());
  for (const auto& s : seqs) {
    a.frames += s.frames;
    a.success_auc += s.success_auc / n;
    a.precision += s.precision / n;
    a.norm_precision_auc += s.norm_precision_auc / n;
    a.mean_iou += s.mean_iou / n;
    for (std::size_t i = 0; i < a.success.values.size(); ++i) a.success.values[i] += s.success.values[i] / n;
    for (std::size_t i = 0; i < a.precision_curve.values.size(); ++i) a.precision_curve.values[i] += s.precision_curve.values[i] / n;
    for (std::size_t i = 0; i < a.norm_precision.values.size(); ++i) a.norm_precision.values[i] += s.norm_precision.values[i] / n;
  }
  a.success.auc = a.success_auc;
  a.precision_curve.auc = 0.0;
  for (double v : a.precision_curve.values) a.precision_curve.auc += v / static_cast<double>(a.precision_curve.values.size());
  a.norm_precision.auc = a.norm_precision_auc;
  r.sequences = std::move(seqs);
  return r;
}

/// Evaluates every dataset sequence against <results>/<name>.txt. All
/// missing result files are named in the error.
inline MetricReport run_eval(const std::string& dataset_dir, const std::string& results_dir, std::string label = "") {
  const auto names = list_sequences(dataset_dir);
  if (names.empty()) throw std::invalid_argument("no sequences in " + dataset_dir);
  std::string missing;
  for (const auto& n : names)
    if (!fs::exists(fs::path(results_dir) / (n + ".txt"))) missing += (missing.empty() ? "" : ", ") + n;
  if (!missing.empty()) throw std::runtime_error("missing results for sequence(s): " + missing);
  std::vector<SequenceMetrics> seqs;
  for (const auto& n : names) {
    const auto gt = read_boxes((fs::path(dataset_dir) / n / "groundtruth.txt").string());
    const auto pred = read_boxes((fs::path(results_dir) / (n + ".txt")).string());
    if (pred.size() != gt.size())
      throw std::runtime_error(n + ": " + std::to_string(pred.size()) + " result lines for " + std::to_string(gt.size()) + " frames");
    seqs.push_back(evaluate_sequence(n, pred, gt));
  }
  return aggregate_report(std::move(seqs), std::move(label));
}

namespace detail {

inline nlohmann::ordered_json curve_json(const Curve& c) {
  return {{"thresholds", c.thresholds}, {"values", c.values}, {"auc", c.auc}};
}

inline nlohmann::ordered_json metrics_json(const SequenceMetrics& m) {
  return {{"name", m.name},
          {"frames", m.frames},
          {"success_auc", m.success_auc},
          {"precision_20px", m.precision},
          {"norm_precision_auc", m.norm_precision_auc},
          {"mean_iou", m.mean_iou},
          {"success_curve", curve_json(m.success)},
          {"precision_curve", curve_json(m.precision_curve)},
          {"norm_precision_curve", curve_json(m.norm_precision)}};
}

inline Curve curve_from_json(const nlohmann::json& j) {
  Curve c;
  c.thresholds = j.at("thresholds").get<std::vector<double>>();
  c.values = j.at("values").get<std::vector<double>>();
  c.auc = j.at("auc").get<double>();
  return c;
}

inline SequenceMetrics metrics_from_json(const nlohmann::json& j) {
  SequenceMetrics m;
  m.name = j.at("name").get<std::string>();
  m.frames = j.at("frames").get<int>();
  m.success_auc = j.at("success_auc").get<double>();
  m.precision = j.at("precision_20px").get<double>();
  m.norm_precision_auc = j.at("norm_precision_auc").get<double>();
  m.mean_iou = j.at("mean_iou").get<double>();
  m.success = curve_from_json(j.at("success_curve"));
  m.precision_curve = curve_from_json(j.at("precision_curve"));
  m.norm_precision = curve_from_json(j.at("norm_precision_curve"));
  return m;
}

}  // namespace detail

inline std::string report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "tomp-eval-report";
  j["schema_version"] = kReportSchemaVersion;
  j["label"] = r.label;
  j["aggregate"] = detail::metrics_json(r.aggregate);
  j["sequences"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sequences) j["sequences"].push_back(detail::metrics_json(s));
  return j.dump(2) + "\n";
}

inline MetricReport read_report_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report " + path);
  const auto j = nlohmann::json::parse(f);
  if (j.value("schema", "") != "tomp-eval-report") throw std::runtime_error(path + ": not an evaluation report");
  if (j.at("schema_version").get<int>() != kReportSchemaVersion)
    throw std::runtime_error(path + ": unsupported report schema version");
  MetricReport r;
  r.label = j.value("label", "");
  r.aggregate = detail::metrics_from_json(j.at("aggregate"));
  for (const auto& s : j.at("sequences")) r.sequences.push_back(detail::metrics_from_json(s));
  return r;
}

inline std::string report_csv(const MetricReport& r) {
  std::string out = "sequence,frames,success_auc,precision_20px,norm_precision_auc,mean_iou\n";
  char buf[256];
  auto row = [&](const SequenceMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f\n", m.name.c_str(), m.frames, m.success_auc, m.precision,
                  m.norm_precision_auc, m.mean_iou);
    out += buf;
  };
  for (const auto& s : r.sequences) row(s);
  row(r.aggregate);
  return out;
}

inline void write_report(const MetricReport& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "report.json", std::ios::trunc) << report_json(r);
  std::ofstream(fs::path(out_dir) / "report.csv", std::ios::trunc) << report_csv(r);
}

}  // namespace tomp
