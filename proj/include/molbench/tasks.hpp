// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace molbench {

enum class TaskKind { Regression, Classification };

std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

/// One downstream benchmark: where it comes from and how big it should be.
struct TaskInfo {
  std::string name;
  TaskKind kind;
  std::size_t expected_rows;
  std::string url;
  std::string smiles_column;
  std::string label_column;
};

/// The six fine-tuning tasks, regression first.
const std::vector<TaskInfo>& task_registry();
const TaskInfo& task_info(std::string_view name);

struct TaskDataset {
  std::string name;
  TaskKind kind = TaskKind::Regression;
  std::vector<std::string> smiles;
  std::vector<double> labels;
  std::vector<std::size_t> train, val, test;
  std::string split_policy;

  std::size_t size() const { return smiles.size(); }
};

/// Reads the canonical "smiles,label" form. Classification labels must be
/// 0 or 1 (DataError otherwise).
TaskDataset read_task_csv(const std::filesystem::path& path, std::string name, TaskKind kind);
void write_task_csv(const TaskDataset& task, const std::filesystem::path& path);

/// Seeded 80/10/10 split; stratified by class for classification so every
/// side holds both labels when possible.
void assign_task_split(TaskDataset& task, std::uint64_t seed);

struct IngestResult {
  TaskDataset dataset;
  std::size_t dropped_rows = 0;  // missing label or smiles
  std::vector<std::string> warnings;
  std::string source;  // recorded in the sidecar; the registry URL when empty
};

/// Converts a raw benchmark CSV (columns named in the registry) into the
/// canonical form; warns when the row count misses the expected size by
/// more than 20%.
IngestResult ingest_raw_csv(const TaskInfo& info, std::string_view raw_text);

/// Inflates a gzip stream.
std::string gunzip(std::string_view bytes);

/// Downloads the raw file for a task (gzip handled). Throws DataError on
/// network failure.
std::string download_raw(const TaskInfo& info);

/// Writes <dir>/<name>.csv and <dir>/<name>.json (row counts, split
/// policy and seed, warnings).
void write_task_files(const IngestResult& result, std::uint64_t split_seed, const std::filesystem::path& dir);

/// Reads a task written by write_task_files and re-derives its split.
TaskDataset load_task(const std::filesystem::path& dir, const std::string& name);

/// Deterministic miniature stand-in: labels are functions of built-in
/// descriptors; classification fixtures are balanced.
TaskDataset fixture_task(const TaskInfo& info, std::size_t rows, std::uint64_t seed);

}  // namespace molbench
