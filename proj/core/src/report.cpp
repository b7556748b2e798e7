#include "nlidisc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nlidisc/error.hpp"

namespace nlidisc {

using nlohmann::json;

std::string_view to_string(ReportKind kind) noexcept {
  switch (kind) {
    case ReportKind::generation: return "generation";
    case ReportKind::scenario: return "scenario";
    case ReportKind::before_after: return "before-after";
    case ReportKind::nli_accuracy: return "nli-accuracy";
    case ReportKind::ablation: return "ablation";
  }
  return "nli-accuracy";
}

static ReportKind report_kind_from(const std::string& s) {
  for (auto k : {ReportKind::generation, ReportKind::scenario, ReportKind::before_after, ReportKind::nli_accuracy,
                 ReportKind::ablation})
    if (to_string(k) == s) return k;
  throw Error(Errc::schema_error, "unknown report kind '" + s + "'");
}

const ReportRow* EvalReport::row(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

std::optional<double> EvalReport::cell(const std::string& row_label, const std::string& column) const {
  const ReportRow* r = row(row_label);
  auto it = std::find(columns.begin(), columns.end(), column);
  if (r == nullptr || it == columns.end()) return std::nullopt;
  auto i = static_cast<std::size_t>(it - columns.begin());
  return i < r->cells.size() ? r->cells[i] : std::nullopt;
}

json to_json(const StatTestResult& r) {
  json j = {{"test", to_string(r.test)},
            {"statistic", r.statistic},
            {"p_value", r.p_value},
            {"significant_at", r.significant_at},
            {"significant", r.significant()}};
  if (r.degrees_of_freedom) j["dof"] = *r.degrees_of_freedom;
  return j;
}

json to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json cells = json::object();
    for (std::size_t i = 0; i < report.columns.size(); ++i) {
      const auto& v = i < r.cells.size() ? r.cells[i] : std::nullopt;
      cells[report.columns[i]] = v ? json(*v) : json(nullptr);
    }
    rows.push_back({{"label", r.label}, {"cells", cells}, {"marked", r.marked}});
  }
  json sig = json::array();
  for (const auto& s : report.significance)
    sig.push_back({{"row", s.row}, {"column", s.column}, {"comparison", s.comparison}, {"result", to_json(s.result)}});
  return {{"kind", to_string(report.kind)}, {"title", report.title},     {"columns", report.columns},
          {"rows", rows},                   {"significance", sig},       {"metadata", report.metadata},
          {"details", report.details}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.kind = report_kind_from(j.at("kind").get<std::string>());
    r.title = j.value("title", "");
    r.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& jr : j.at("rows")) {
      ReportRow row;
      row.label = jr.at("label").get<std::string>();
      for (const auto& c : r.columns) {
        const auto& v = jr.at("cells").at(c);
        row.cells.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
      row.marked = jr.value("marked", std::set<std::string>{});
      r.rows.push_back(std::move(row));
    }
    for (const auto& js : j.value("significance", json::array())) {
      SignificanceEntry s;
      s.row = js.at("row").get<std::string>();
      s.column = js.at("column").get<std::string>();
      s.comparison = js.at("comparison").get<std::string>();
      const auto& res = js.at("result");
      auto test = stat_test_from_string(res.at("test").get<std::string>());
      if (!test) throw Error(Errc::schema_error, "unknown test");
      s.result.test = *test;
      s.result.statistic = res.at("statistic").get<double>();
      s.result.p_value = res.at("p_value").get<double>();
      s.result.significant_at = res.value("significant_at", kSignificanceLevel);
      if (res.contains("dof")) s.result.degrees_of_freedom = res.at("dof").get<double>();
      r.significance.push_back(std::move(s));
    }
    r.metadata = j.value("metadata", json::object());
    r.details = j.value("details", json::object());
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, std::string("report: ") + e.what());
  }
}

static std::string format_cell(const std::optional<double>& v, int decimals, bool marked) {
  if (!v) return "-";
  char buf[64];
  double scaled = *v * 100.0;
  if (std::abs(scaled) < 0.5 * std::pow(10.0, -decimals)) scaled = 0.0;  // no "-0.00"
  std::snprintf(buf, sizeof buf, "%.*f", decimals, scaled);
  std::string s = buf;
  if (marked) s += "†";
  return s;
}

// Display width, counting each UTF-8 sequence as one column.
static std::size_t width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string render_table(const EvalReport& report, int decimals) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{""};
  header.insert(header.end(), report.columns.begin(), report.columns.end());
  grid.push_back(header);
  for (const auto& r : report.rows) {
    std::vector<std::string> line{r.label};
    for (std::size_t i = 0; i < report.columns.size(); ++i)
      line.push_back(format_cell(i < r.cells.size() ? r.cells[i] : std::nullopt, decimals,
                                 r.marked.count(report.columns[i]) > 0));
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));

  std::string out;
  if (!report.title.empty()) out += report.title + "\n";
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t i = 0; i < line.size(); ++i) {
      std::string pad(widths[i] - width(line[i]), ' ');
      // first column left-aligned, numbers right-aligned
      text += i == 0 ? line[i] + pad : "  " + pad + line[i];
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
  }
  return out;
}

}  // namespace nlidisc
