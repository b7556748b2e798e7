#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/stats.hpp"

namespace nlidisc {

enum class ReportKind { generation, scenario, before_after, nli_accuracy, ablation };
std::string_view to_string(ReportKind kind) noexcept;

struct ReportRow {
  std::string label;
  /// Aligned with EvalReport::columns; nullopt renders as "-".
  std::vector<std::optional<double>> cells;
  /// Columns whose value is significant at p < 0.01 (rendered with a dagger).
  std::set<std::string> marked;
};

struct SignificanceEntry {
  std::string row;
  std::string column;
  /// What was compared, e.g. "supportive vs unsupportive" or "few-shot vs zero-shot".
  std::string comparison;
  StatTestResult result;
};

/// Table-shaped experiment result. Values are stored on a [0, 1] scale
/// (accuracy deltas on [-1, 1]); render_table() prints them x100.
struct EvalReport {
  ReportKind kind = ReportKind::nli_accuracy;
  std::string title;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
  std::vector<SignificanceEntry> significance;
  /// Seed, backend, sampling parameters and prompt fingerprints.
  nlohmann::json metadata = nlohmann::json::object();
  /// Per-item records (ids, prompt fingerprints, predictions) tying every
  /// cell back to the raw artifact log.
  nlohmann::json details = nlohmann::json::object();

  const ReportRow* row(const std::string& label) const;
  std::optional<double> cell(const std::string& row_label, const std::string& column) const;
};

nlohmann::json to_json(const StatTestResult& result);
nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
/// Aligned plain-text table, values x100 with the given decimals.
std::string render_table(const EvalReport& report, int decimals = 2);

}  // namespace nlidisc
