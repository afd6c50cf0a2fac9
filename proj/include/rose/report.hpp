#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rose/errors.hpp"
#include "rose/harness.hpp"

namespace rose {

struct UncertaintyBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // empty bins have none
};

struct RunReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::size_t unscored = 0;  // records without an uncertainty (no parseable path)
  std::vector<UncertaintyBin> bins;
};

// Uncertainty divided by ln(m), clamped to [0, 1]. With m = 1 every answer is certain.
inline double normalized_uncertainty(double u, int m) {
  if (m <= 1) return 0.0;
  return std::clamp(u / std::log(static_cast<double>(m)), 0.0, 1.0);
}

// Overall accuracy plus accuracy per equal-width bin of normalized uncertainty.
inline RunReport report(std::span<const EvalRecord> records, int m, int n_bins = 10) {
  if (records.empty()) throw DomainError("report: no records");
  if (n_bins < 1) throw DomainError("report: need at least one bin");
  RunReport r;
  r.bins.resize(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i) {
    r.bins[static_cast<std::size_t>(i)].lo = static_cast<double>(i) / n_bins;
    r.bins[static_cast<std::size_t>(i)].hi = static_cast<double>(i + 1) / n_bins;
  }
  for (const auto& rec : records) {
    ++r.total;
    if (rec.correct) ++r.correct;
    if (!rec.uncertainty) {
      ++r.unscored;
      continue;
    }
    const double x = normalized_uncertainty(*rec.uncertainty, m);
    const auto idx = std::min(static_cast<std::size_t>(std::floor(x * n_bins)), static_cast<std::size_t>(n_bins - 1));
    auto& bin = r.bins[idx];
    ++bin.count;
    if (rec.correct) ++bin.correct;
  }
  for (auto& bin : r.bins) {
    if (bin.count) bin.accuracy = static_cast<double>(bin.correct) / static_cast<double>(bin.count);
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

struct OrderSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline OrderSummary summarize_orders(std::span<const double> accuracies) {
  if (accuracies.empty()) throw DomainError("summarize_orders: no runs");
  OrderSummary s;
  s.mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
  s.min = *std::min_element(accuracies.begin(), accuracies.end());
  s.max = *std::max_element(accuracies.begin(), accuracies.end());
  return s;
}

// ---------------------------------------------------------------------------
// Report file: one JSON line per EvalRecord, then one {"summary": ...} line.

inline nlohmann::ordered_json to_json(const EvalRecord& r, int order) {
  nlohmann::ordered_json j;
  j["order"] = order;
  j["question_index"] = r.question_index;
  j["source_index"] = r.source_index;
  j["question"] = r.question;
  j["gold_answer"] = r.gold_answer;
  j["predicted"] = r.predicted ? nlohmann::ordered_json(*r.predicted) : nlohmann::ordered_json(nullptr);
  j["correct"] = r.correct;
  j["uncertainty"] = r.uncertainty ? nlohmann::ordered_json(*r.uncertainty) : nlohmann::ordered_json(nullptr);
  j["complexity"] = r.complexity ? nlohmann::ordered_json(*r.complexity) : nlohmann::ordered_json(nullptr);
  j["demos_used"] = r.demos_used;
  j["appended_id"] = r.appended_id ? nlohmann::ordered_json(*r.appended_id) : nlohmann::ordered_json(nullptr);
  j["latency_ms"] = r.latency.count();
  if (r.error) j["error"] = *r.error;
  return j;
}

inline nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["unscored"] = r.unscored;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json bj;
    bj["lo"] = b.lo;
    bj["hi"] = b.hi;
    bj["count"] = b.count;
    bj["correct"] = b.correct;
    bj["accuracy"] = b.accuracy ? nlohmann::ordered_json(*b.accuracy) : nlohmann::ordered_json(nullptr);
    bins.push_back(std::move(bj));
  }
  j["uncertainty_bins"] = std::move(bins);
  return j;
}

inline std::string mode_name(std::optional<BaselineMode> baseline) {
  if (!baseline) return "rose";
  return *baseline == BaselineMode::ZeroShot ? "zero-shot" : "zero-shot-sc";
}

// Full report document for one or more runs of the same dataset (one per
// test order). The top-level accuracy and bins pool the records of all runs.
inline std::string report_document(const std::vector<StreamResult>& runs, const EngineConfig& config,
                                   std::optional<BaselineMode> baseline = std::nullopt) {
  if (runs.empty()) throw DomainError("report_document: no runs");
  const int m = baseline == BaselineMode::ZeroShot ? 1 : config.m;
  std::string out;
  std::vector<EvalRecord> all;
  std::vector<double> accuracies;
  auto per_order = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const auto& rec : runs[i].records) {
      out += to_json(rec, static_cast<int>(i)).dump();
      out += '\n';
      all.push_back(rec);
    }
    nlohmann::ordered_json oj;
    oj["order"] = i;
    if (runs[i].records.empty()) {
      oj["accuracy"] = nullptr;
    } else {
      const auto rr = report(runs[i].records, m);
      oj["accuracy"] = rr.accuracy;
      oj["correct"] = rr.correct;
      oj["total"] = rr.total;
      accuracies.push_back(rr.accuracy);
    }
    oj["pool_size"] = runs[i].pool.size();
    oj["aborted"] = runs[i].aborted;
    oj["permutation"] = runs[i].order;
    per_order.push_back(std::move(oj));
  }

  nlohmann::ordered_json summary;
  summary["mode"] = mode_name(baseline);
  summary["k"] = config.k;
  summary["paths"] = m;
  summary["temperature"] = baseline == BaselineMode::ZeroShot ? 0.0 : config.temperature;
  if (const auto* dyn = std::get_if<DynamicThreshold>(&config.threshold)) {
    summary["threshold"] = {{"mode", "dynamic"}, {"lambda", dyn->lambda}};
  } else {
    summary["threshold"] = {{"mode", "fixed"}, {"value", std::get<FixedThreshold>(config.threshold).value}};
  }
  summary["partition"] = config.partition == PartitionStrategy::EqualWidth ? "equal-width" : "equal-count";
  summary["seed"] = config.seed;
  if (!all.empty()) {
    const auto overall = to_json(report(all, m));
    for (const auto& [key, value] : overall.items()) summary[key] = value;
  }
  summary["orders"] = std::move(per_order);
  if (!accuracies.empty()) {
    const auto s = summarize_orders(accuracies);
    summary["order_summary"] = {{"mean", s.mean}, {"min", s.min}, {"max", s.max}};
  }
  nlohmann::ordered_json wrapper;
  wrapper["summary"] = std::move(summary);
  out += wrapper.dump();
  out += '\n';
  return out;
}

}  // namespace rose
