// SPDX-License-Identifier: Apache-2.0
#include "molbench/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "molbench/csv.hpp"
#include "molbench/error.hpp"

namespace molbench {

namespace {

std::string num(double v) { return std::isnan(v) ? "" : csv::format_double(v); }

std::string fixed(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(6);
  ss << v;
  return ss.str();
}

constexpr std::size_t npos = static_cast<std::size_t>(-1);

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string best_csv(const GroupReport& r) {
  std::string out = "task_kind,task,benchmark," + std::string(grouping_name(r.grouping)) + "\n";
  for (const auto& t : r.tasks)
    out += std::string(task_kind_name(t.kind)) + "," + csv::escape(t.task) + "," + num(t.benchmark) + "," +
           csv::escape(t.benchmark_group) + "\n";
  return out;
}

std::string averages_csv(const GroupReport& r) {
  std::string out = "group";
  for (const auto& t : r.tasks) out += "," + csv::escape(t.task);
  out += ",records_per_task\n";
  for (const auto& row : r.rows) {
    out += csv::escape(row.group);
    for (double a : row.averages) out += "," + num(a);
    out += "," + std::to_string(row.records_per_task) + "\n";
  }
  return out;
}

std::string tes_csv(const GroupReport& r) {
  const std::size_t bt[2] = {r.best_tes(TaskKind::Regression), r.best_tes(TaskKind::Classification)};
  const std::size_t bs[2] = {r.best_std(TaskKind::Regression), r.best_std(TaskKind::Classification)};
  std::string out =
      "group,regression_tes,regression_std,regression_best_tes,regression_best_std,"
      "classification_tes,classification_std,classification_best_tes,classification_best_std\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    out += csv::escape(row.group);
    for (int f = 0; f < 2; ++f)
      out += "," + num(row.tes[f]) + "," + num(row.std_dev[f]) + "," + (bt[f] == i ? "1" : "0") + "," +
             (bs[f] == i ? "1" : "0");
    out += "\n";
  }
  return out;
}

std::string report_markdown(const GroupReport& r) {
  const std::string g(grouping_name(r.grouping));
  std::ostringstream md;
  md << "## Grouped by " << g << "\n\n";
  md << "| Task kind | Task | Best avg. metric | " << g << " |\n|---|---|---|---|\n";
  for (const auto& t : r.tasks)
    md << "| " << task_kind_name(t.kind) << (t.kind == TaskKind::Regression ? " (RMSE)" : " (AUC-ROC)") << " | "
       << t.task << " | " << fixed(t.benchmark) << " | " << t.benchmark_group << " |\n";

  md << "\n| " << g;
  for (const auto& t : r.tasks) md << " | " << t.task;
  md << " |\n|---";
  for (std::size_t i = 0; i < r.tasks.size(); ++i) md << "|---";
  md << "|\n";
  for (const auto& row : r.rows) {
    md << "| " << row.group;
    for (std::size_t t = 0; t < r.tasks.size(); ++t) {
      const bool at_bench = row.averages[t] == r.tasks[t].benchmark;
      md << " | " << (at_bench ? "**" : "") << fixed(row.averages[t]) << (at_bench ? "**" : "");
    }
    md << " |\n";
  }

  const std::size_t bt[2] = {r.best_tes(TaskKind::Regression), r.best_tes(TaskKind::Classification)};
  const std::size_t bs[2] = {r.best_std(TaskKind::Regression), r.best_std(TaskKind::Classification)};
  md << "\n| " << g << " | Regression TES | Regression STD | Classification TES | Classification STD |\n"
     << "|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    md << "| " << row.group;
    for (int f = 0; f < 2; ++f) {
      md << " | " << (bt[f] == i ? "**" : "") << fixed(row.tes[f]) << (bt[f] == i ? "**" : "");
      md << " | " << (bs[f] == i ? "**" : "") << fixed(row.std_dev[f]) << (bs[f] == i ? "**" : "");
    }
    md << " |\n";
  }
  md << "\n";
  return md.str();
}

std::vector<std::filesystem::path> write_reports(const BestMetricsSet& best, const std::filesystem::path& dir,
                                                 EsMode mode, bool partial) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::string md = "# Fine-tuning report\n\nES aggregation: " + std::string(es_mode_name(mode)) + " of deviations. " +
                   std::to_string(best.size()) + " selected records" + (partial ? " (partial grid)" : "") +
                   ".\n\n";
  for (auto g : all_groupings()) {
    const auto report = build_group_report(best, g, mode);
    const std::string name(grouping_name(g));
    for (const auto& [file, text] : {std::pair{"best_" + name + ".csv", best_csv(report)},
                                     std::pair{"averages_" + name + ".csv", averages_csv(report)},
                                     std::pair{"tes_" + name + ".csv", tes_csv(report)}}) {
      write_file(dir / file, text);
      written.push_back(dir / file);
    }
    md += report_markdown(report);
  }
  write_file(dir / "report.md", md);
  written.push_back(dir / "report.md");
  return written;
}

}  // namespace molbench
