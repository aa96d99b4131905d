// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "molbench/tasks.hpp"

namespace molbench {

double rmse(std::span<const double> pred, std::span<const double> label);
double mae(std::span<const double> pred, std::span<const double> label);

/// Normalized Mann-Whitney U: (pairs with pos > neg + ties / 2) / (P * N).
/// Labels are 0/1; both classes must be present.
double auc_roc(std::span<const double> scores, std::span<const double> labels);

struct RunKey {
  std::string mt;  // Encoder | Decoder | EncoderDecoder
  std::string ms;
  std::string ds;
  std::size_t iteration = 0;
  std::size_t mtr_epoch = 0;
  std::size_t ft_epoch = 0;
  std::string task;
  TaskKind task_kind = TaskKind::Regression;

  friend bool operator==(const RunKey&, const RunKey&) = default;
};

/// Canonical order: mt, ms, ds (known labels first, in grid order), then
/// task, iteration, mtr_epoch, ft_epoch.
bool key_less(const RunKey& a, const RunKey& b);
std::string to_string(const RunKey& key);

struct MetricRecord {
  RunKey key;
  double val_loss = 0.0;
  double test_metric = 0.0;
};

using BestMetricsSet = std::vector<MetricRecord>;

/// The expected cell set; axes left empty are inferred from the records.
struct GridAxes {
  std::vector<std::string> mt, ms, ds, tasks;
  std::size_t iterations = 0, mtr_epochs = 0, ft_epochs = 0;
};

/// Minimum val_loss per (mt, ms, ds, iteration, task) over all epochs,
/// ties to the smaller (mtr_epoch, ft_epoch). Unless partial, every cell of
/// the grid must be present (DataError listing the absent keys).
BestMetricsSet select_best(const std::vector<MetricRecord>& records, const GridAxes& axes = {},
                           bool partial = false);

enum class Grouping { MT, MTMS, MTDS, MSDS };
std::string_view grouping_name(Grouping g);
Grouping parse_grouping(std::string_view text);
std::vector<Grouping> all_groupings();

/// Group label for a key, e.g. "ChemBART" or "ChemBERTa Small".
std::string group_label(const RunKey& key, Grouping g);

struct GroupAverage {
  std::string group;
  double average = 0.0;
  std::size_t count = 0;
};

/// Groups in canonical order. Throws DataError when no record has the task.
std::vector<GroupAverage> group_average(const BestMetricsSet& best, Grouping g, const std::string& task);

/// Lowest average for regression, highest for classification.
double benchmark(std::span<const GroupAverage> averages, TaskKind kind);

/// Positive means worse than the benchmark for both task kinds.
double deviation(double test_metric, double benchmark_value, TaskKind kind);

enum class EsMode { Mean, Sum };
std::string_view es_mode_name(EsMode mode);

struct TaskSummary {
  std::string task;
  TaskKind kind = TaskKind::Regression;
  double benchmark = 0.0;
  std::string benchmark_group;
};

struct GroupRow {
  std::string group;
  std::vector<double> averages;  // per task column
  std::vector<double> es;        // per task column
  std::size_t records_per_task = 0;
  // index 0 regression, 1 classification; NaN when the family is absent
  double tes[2];
  double std_dev[2];
};

struct GroupReport {
  Grouping grouping = Grouping::MT;
  EsMode mode = EsMode::Mean;
  std::vector<TaskSummary> tasks;  // regression tasks first
  std::vector<GroupRow> rows;

  /// Row index with the lowest TES / STD for a family, or npos.
  std::size_t best_tes(TaskKind kind) const;
  std::size_t best_std(TaskKind kind) const;
};

/// The five-step procedure: averages, benchmark, signed deviations, ES per
/// task and TES/STD per family. Every group must cover every task.
GroupReport build_group_report(const BestMetricsSet& best, Grouping g, EsMode mode = EsMode::Mean);

}  // namespace molbench
