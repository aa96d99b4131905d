// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace molbench {

struct MoleculeRecord {
  std::string smiles;
  std::vector<double> descriptors;
  std::vector<std::uint8_t> present;  // 0 = removed outlier or uncomputable
};

/// Statistics over the present entries of one column. Quantiles use linear
/// interpolation between order statistics; the median of an even count is
/// the mean of the two middle values.
struct ColumnStats {
  std::size_t present_count = 0;
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population
  double lo_quantile = 0.0;
  double hi_quantile = 0.0;
};

struct DescriptorTable {
  std::vector<MoleculeRecord> rows;
  std::vector<std::string> column_names;
  std::vector<ColumnStats> column_stats;
  /// Set by zscore on columns it refused to divide (zero variance or fewer
  /// than two present values); prune_constant_columns drops them.
  std::vector<std::uint8_t> flagged;

  std::size_t num_columns() const { return column_names.size(); }
  std::size_t num_rows() const { return rows.size(); }
  /// Throws DataError if any row disagrees with the column count.
  void validate() const;
  std::vector<double> present_values(std::size_t column) const;
};

double quantile_sorted(std::span<const double> sorted, double q);
double median_sorted(std::span<const double> sorted);
ColumnStats compute_stats(std::vector<double> values, double lo_q = 0.0, double hi_q = 1.0);
/// Recomputes column_stats from the present entries.
void refresh_stats(DescriptorTable& table, double lo_q = 0.0, double hi_q = 1.0);

/// Keeps the first occurrence of every SMILES string.
std::vector<MoleculeRecord> dedup(const std::vector<MoleculeRecord>& records);

struct MaskResult {
  DescriptorTable table;
  std::size_t masked_cells = 0;
  std::vector<std::string> warnings;
};

/// Clears present on values strictly outside [q(lo_q), q(hi_q)] per column.
/// Columns with fewer than two present values are left alone with a warning.
MaskResult mask_outliers(const DescriptorTable& table, double lo_q, double hi_q);

/// Population z-score over present entries. Columns with zero variance or
/// fewer than two present values are flagged instead of divided.
DescriptorTable zscore(const DescriptorTable& table);

struct PruneResult {
  DescriptorTable table;
  std::vector<std::string> removed;
};

/// Removes columns whose present-value minimum equals their median, plus
/// columns that zscore flagged or that have fewer than two present values.
PruneResult prune_constant_columns(const DescriptorTable& table);

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Seeded partition; val side gets round(n * val_fraction) rows.
SplitPlan split(std::size_t num_rows, double val_fraction, std::uint64_t seed);
SplitPlan split(const DescriptorTable& table, double val_fraction, std::uint64_t seed);

/// Deterministic permutation of [0, n) for a given epoch. For n >= 2,
/// consecutive epochs never repeat a permutation.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::size_t epoch, std::uint64_t seed);

struct CurationConfig {
  double lo_q = 0.001;
  double hi_q = 0.999;
  bool mask_outliers = true;
  bool prune = true;
};

struct CurationStage {
  std::string name;
  std::size_t rows = 0;
  std::size_t columns = 0;
  std::size_t masked_cells = 0;
};

struct CurationReport {
  std::vector<CurationStage> stages;
  std::vector<std::string> removed_columns;
  std::vector<std::string> rejected_smiles;
  std::vector<std::string> warnings;
  CurationConfig config;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

struct CurationResult {
  DescriptorTable table;
  CurationReport report;
};

/// dedup -> builtin descriptors -> outlier mask -> prune -> z-score.
/// Rows whose SMILES cannot be parsed are rejected and listed in the report.
CurationResult curate_smiles(const std::vector<std::string>& corpus, const CurationConfig& config);

/// Same pipeline for a table that already carries descriptors.
CurationResult curate_table(const DescriptorTable& input, const CurationConfig& config);

/// "smiles,<prop1>,...": empty cells are missing, non-finite values too.
DescriptorTable read_descriptor_csv(const std::filesystem::path& path);
void write_descriptor_csv(const DescriptorTable& table, const std::filesystem::path& path);

nlohmann::json stats_to_json(const DescriptorTable& table);

}  // namespace molbench
