// SPDX-License-Identifier: Apache-2.0
#include "molbench/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "molbench/csv.hpp"
#include "molbench/error.hpp"
#include "molbench/rng.hpp"
#include "molbench/smiles_graph.hpp"

namespace molbench {

void DescriptorTable::validate() const {
  const std::size_t p = column_names.size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].descriptors.size() != p || rows[r].present.size() != p) {
      throw DataError("row " + std::to_string(r) + " (" + rows[r].smiles + ") has " +
                      std::to_string(rows[r].descriptors.size()) + " values, expected " +
                      std::to_string(p));
    }
  }
}

std::vector<double> DescriptorTable::present_values(std::size_t column) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.present[column]) out.push_back(r.descriptors[column]);
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty column");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_sorted(std::span<const double> sorted) {
  if (sorted.empty()) throw DataError("median of an empty column");
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

ColumnStats compute_stats(std::vector<double> values, double lo_q, double hi_q) {
  ColumnStats s;
  s.present_count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.median = median_sorted(values);
  s.lo_quantile = quantile_sorted(values, lo_q);
  s.hi_quantile = quantile_sorted(values, hi_q);
  double sum = 0.0;
  for (const double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

void refresh_stats(DescriptorTable& table, double lo_q, double hi_q) {
  table.column_stats.resize(table.num_columns());
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    table.column_stats[c] = compute_stats(table.present_values(c), lo_q, hi_q);
  }
}

std::vector<MoleculeRecord> dedup(const std::vector<MoleculeRecord>& records) {
  std::unordered_set<std::string> seen;
  std::vector<MoleculeRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (seen.insert(r.smiles).second) out.push_back(r);
  }
  return out;
}

MaskResult mask_outliers(const DescriptorTable& table, double lo_q, double hi_q) {
  if (!(lo_q >= 0.0 && lo_q < hi_q && hi_q <= 1.0)) {
    throw std::invalid_argument("mask_outliers: need 0 <= lo_q < hi_q <= 1");
  }
  table.validate();
  MaskResult res{table, 0, {}};
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    auto values = table.present_values(c);
    if (values.size() < 2) {
      res.warnings.push_back("column '" + table.column_names[c] + "' has " +
                             std::to_string(values.size()) +
                             " present values; outlier masking skipped");
      continue;
    }
    std::sort(values.begin(), values.end());
    const double lo = quantile_sorted(values, lo_q);
    const double hi = quantile_sorted(values, hi_q);
    for (auto& row : res.table.rows) {
      if (!row.present[c]) continue;
      const double v = row.descriptors[c];
      if (v < lo || v > hi) {
        row.present[c] = 0;
        ++res.masked_cells;
      }
    }
  }
  refresh_stats(res.table);
  return res;
}

DescriptorTable zscore(const DescriptorTable& table) {
  table.validate();
  DescriptorTable out = table;
  refresh_stats(out);
  out.flagged.assign(out.num_columns(), 0);
  for (std::size_t c = 0; c < out.num_columns(); ++c) {
    const auto& s = out.column_stats[c];
    if (s.present_count < 2 || !(s.std > 0.0)) {
      out.flagged[c] = 1;
      continue;
    }
    for (auto& row : out.rows) {
      if (row.present[c]) row.descriptors[c] = (row.descriptors[c] - s.mean) / s.std;
    }
  }
  return out;
}

PruneResult prune_constant_columns(const DescriptorTable& table) {
  table.validate();
  DescriptorTable stats_view = table;
  refresh_stats(stats_view);
  std::vector<std::size_t> keep;
  PruneResult res;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const auto& s = stats_view.column_stats[c];
    const bool flagged = c < table.flagged.size() && table.flagged[c];
    if (flagged || s.present_count < 2 || s.min == s.median) {
      res.removed.push_back(table.column_names[c]);
    } else {
      keep.push_back(c);
    }
  }
  DescriptorTable& out = res.table;
  for (const auto c : keep) {
    out.column_names.push_back(table.column_names[c]);
    out.column_stats.push_back(stats_view.column_stats[c]);
  }
  out.flagged.assign(keep.size(), 0);
  out.rows.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    MoleculeRecord r{row.smiles, {}, {}};
    r.descriptors.reserve(keep.size());
    r.present.reserve(keep.size());
    for (const auto c : keep) {
      r.descriptors.push_back(row.descriptors[c]);
      r.present.push_back(row.present[c]);
    }
    out.rows.push_back(std::move(r));
  }
  return res;
}

SplitPlan split(std::size_t num_rows, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split: val_fraction must lie in (0, 1)");
  }
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(num_rows)));
  if (n_val == 0 || n_val >= num_rows) {
    throw DataError("split of " + std::to_string(num_rows) + " rows at fraction " +
                    csv::format_double(val_fraction) + " leaves one side empty");
  }
  std::vector<std::size_t> order(num_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  shuffle(order, rng);
  SplitPlan plan;
  plan.seed = seed;
  plan.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  plan.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(plan.val_indices.begin(), plan.val_indices.end());
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  return plan;
}

SplitPlan split(const DescriptorTable& table, double val_fraction, std::uint64_t seed) {
  return split(table.num_rows(), val_fraction, seed);
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::size_t epoch, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("epoch_permutation: n must be >= 1");
  auto draw = [&](std::size_t e) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "epoch:" + std::to_string(e)));
    shuffle(p, rng);
    return p;
  };
  std::vector<std::size_t> perm = draw(0);
  for (std::size_t e = 1; e <= epoch; ++e) {
    auto next = draw(e);
    // Only reachable for tiny n; a swap breaks the repeat deterministically.
    if (n >= 2 && next == perm) std::swap(next[0], next[1]);
    perm = std::move(next);
  }
  return perm;
}

nlohmann::json CurationReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"lo_q", config.lo_q},
                 {"hi_q", config.hi_q},
                 {"mask_outliers", config.mask_outliers},
                 {"prune", config.prune}};
  j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    j["stages"].push_back(
        {{"stage", s.name}, {"rows", s.rows}, {"columns", s.columns}, {"masked_cells", s.masked_cells}});
  }
  j["removed_columns"] = removed_columns;
  j["rejected_smiles"] = rejected_smiles;
  j["warnings"] = warnings;
  return j;
}

std::string CurationReport::to_text() const {
  std::ostringstream os;
  os << "curation report (lo_q=" << config.lo_q << ", hi_q=" << config.hi_q
     << ", mask=" << (config.mask_outliers ? "on" : "off")
     << ", prune=" << (config.prune ? "on" : "off") << ")\n";
  for (const auto& s : stages) {
    os << "  " << s.name << ": rows=" << s.rows << " columns=" << s.columns;
    if (s.masked_cells) os << " masked_cells=" << s.masked_cells;
    os << '\n';
  }
  if (!removed_columns.empty()) {
    os << "  removed columns:";
    for (const auto& c : removed_columns) os << ' ' << c;
    os << '\n';
  }
  if (!rejected_smiles.empty()) os << "  rejected rows: " << rejected_smiles.size() << '\n';
  for (const auto& w : warnings) os << "  warning: " << w << '\n';
  return os.str();
}

namespace {

CurationResult run_pipeline(DescriptorTable table, const CurationConfig& config, CurationReport report) {
  table.validate();
  report.stages.push_back({"descriptors", table.num_rows(), table.num_columns(), 0});

  if (config.mask_outliers) {
    auto masked = mask_outliers(table, config.lo_q, config.hi_q);
    report.stages.push_back({"outlier_mask", masked.table.num_rows(), masked.table.num_columns(),
                             masked.masked_cells});
    report.warnings.insert(report.warnings.end(), masked.warnings.begin(), masked.warnings.end());
    table = std::move(masked.table);
  }
  if (config.prune) {
    auto pruned = prune_constant_columns(table);
    report.stages.push_back({"prune", pruned.table.num_rows(), pruned.table.num_columns(), 0});
    report.removed_columns = pruned.removed;
    table = std::move(pruned.table);
  }
  table = zscore(table);
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    if (table.flagged[c]) {
      report.warnings.push_back("column '" + table.column_names[c] +
                                "' has zero variance; left unnormalized and flagged");
    }
  }
  report.stages.push_back({"zscore", table.num_rows(), table.num_columns(), 0});
  return {std::move(table), std::move(report)};
}

}  // namespace

CurationResult curate_smiles(const std::vector<std::string>& corpus, const CurationConfig& config) {
  if (corpus.empty()) throw DataError("empty corpus");
  CurationReport report;
  report.config = config;
  report.stages.push_back({"input", corpus.size(), 0, 0});

  std::vector<MoleculeRecord> records;
  records.reserve(corpus.size());
  for (const auto& s : corpus) records.push_back({s, {}, {}});
  records = dedup(records);
  report.stages.push_back({"dedup", records.size(), 0, 0});

  DescriptorTable table;
  for (const auto name : builtin_descriptor_names()) table.column_names.emplace_back(name);
  for (auto& r : records) {
    try {
      const auto d = builtin_descriptors(r.smiles);
      r.descriptors.assign(d.begin(), d.end());
      r.present.assign(d.size(), 1);
      table.rows.push_back(std::move(r));
    } catch (const DataError&) {
      report.rejected_smiles.push_back(r.smiles);
    }
  }
  if (table.rows.empty()) throw DataError("no row of the corpus could be featurized");
  return run_pipeline(std::move(table), config, std::move(report));
}

CurationResult curate_table(const DescriptorTable& input, const CurationConfig& config) {
  if (input.rows.empty()) throw DataError("empty descriptor table");
  CurationReport report;
  report.config = config;
  report.stages.push_back({"input", input.num_rows(), input.num_columns(), 0});
  DescriptorTable table = input;
  table.rows = dedup(input.rows);
  table.flagged.clear();
  report.stages.push_back({"dedup", table.num_rows(), table.num_columns(), 0});
  return run_pipeline(std::move(table), config, std::move(report));
}

DescriptorTable read_descriptor_csv(const std::filesystem::path& path) {
  const auto csv_table = csv::read(path);
  if (csv_table.header.empty() || csv_table.header[0] != "smiles") {
    throw DataError(path.string() + ": header must start with 'smiles'");
  }
  DescriptorTable t;
  t.column_names.assign(csv_table.header.begin() + 1, csv_table.header.end());
  for (std::size_t r = 0; r < csv_table.rows.size(); ++r) {
    const auto& cells = csv_table.rows[r];
    MoleculeRecord rec{cells[0], {}, {}};
    if (rec.smiles.empty()) {
      throw DataError(path.string() + ": line " + std::to_string(csv_table.line_numbers[r]) +
                      " has an empty smiles cell");
    }
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        rec.descriptors.push_back(0.0);
        rec.present.push_back(0);
        continue;
      }
      const double v = csv::parse_double(
          cells[c], path.string() + ":" + std::to_string(csv_table.line_numbers[r]));
      rec.descriptors.push_back(std::isfinite(v) ? v : 0.0);
      rec.present.push_back(std::isfinite(v) ? 1 : 0);
    }
    t.rows.push_back(std::move(rec));
  }
  refresh_stats(t);
  return t;
}

void write_descriptor_csv(const DescriptorTable& table, const std::filesystem::path& path) {
  table.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "smiles";
  for (const auto& n : table.column_names) out << ',' << csv::escape(n);
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.smiles;
    for (std::size_t c = 0; c < r.descriptors.size(); ++c) {
      out << ',';
      if (r.present[c]) out << csv::format_double(r.descriptors[c]);
    }
    out << '\n';
  }
}

nlohmann::json stats_to_json(const DescriptorTable& table) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const auto& s = table.column_stats.at(c);
    j.push_back({{"column", table.column_names[c]},
                 {"present", s.present_count},
                 {"min", s.min},
                 {"median", s.median},
                 {"mean", s.mean},
                 {"std", s.std},
                 {"lo_quantile", s.lo_quantile},
                 {"hi_quantile", s.hi_quantile}});
  }
  return j;
}

}  // namespace molbench
