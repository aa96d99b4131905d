// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "molbench/metrics.hpp"

namespace molbench {

/// One row per task: kind, task, benchmark average, attaining group.
std::string best_csv(const GroupReport& report);

/// Every group average: one row per group, one column per task.
std::string averages_csv(const GroupReport& report);

/// TES and STD per family with best_tes / best_std flags (1 on the lowest).
std::string tes_csv(const GroupReport& report);

/// Both tables for one grouping; best cells in bold.
std::string report_markdown(const GroupReport& report);

/// Writes best_<G>.csv, averages_<G>.csv, tes_<G>.csv for every grouping plus report.md.
/// Returns the paths written.
std::vector<std::filesystem::path> write_reports(const BestMetricsSet& best, const std::filesystem::path& dir,
                                                 EsMode mode = EsMode::Mean, bool partial = false);

}  // namespace molbench
