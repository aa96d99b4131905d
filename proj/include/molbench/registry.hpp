// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molbench/metrics.hpp"

namespace molbench {

/// One registry line: mt, ms, ds, iteration, mtr_epoch, ft_epoch, task,
/// task_kind, val_loss, test_metric, then timestamp when given.
nlohmann::ordered_json record_to_json(const MetricRecord& record,
                                      const std::optional<std::string>& timestamp = std::nullopt);
MetricRecord record_from_json(const nlohmann::json& j);

/// Parses every line; a malformed line throws DataError with its number.
std::vector<MetricRecord> read_registry(const std::filesystem::path& path);

struct RegistryScan {
  std::vector<MetricRecord> records;
  std::vector<std::size_t> line_starts;  // byte offset of each record's line
  std::size_t valid_bytes = 0;           // length of the prefix of whole valid lines
  bool torn_tail = false;
};

/// Like read_registry but tolerates a torn final line (crash mid-write).
RegistryScan scan_registry(const std::filesystem::path& path);

/// registry.jsonl, then registry-1.jsonl, ... : the first name not taken.
std::filesystem::path next_registry_path(const std::filesystem::path& dir);
/// Highest-numbered existing registry in dir, if any.
std::optional<std::filesystem::path> latest_registry_path(const std::filesystem::path& dir);

/// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

/// Append-only sink. Each append writes whole lines and flushes.
class RegistryWriter {
 public:
  /// Opens for append; truncate_to cuts a torn tail before appending.
  explicit RegistryWriter(const std::filesystem::path& path, std::optional<std::size_t> truncate_to = std::nullopt);
  void append(const std::vector<MetricRecord>& records);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Drops the timestamp member of every line; used to compare registries.
std::string strip_timestamps(const std::string& jsonl);

}  // namespace molbench
