// SPDX-License-Identifier: Apache-2.0
#include "molbench/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_set>

#include "molbench/error.hpp"
#include "molbench/tokenizer.hpp"

namespace molbench {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw DataError(std::string(what) + ": empty input");
  if (a.size() != b.size())
    throw DataError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
}

int mt_rank(const std::string& mt) {
  try {
    return static_cast<int>(parse_family(mt));
  } catch (const std::exception&) {
    return 3;
  }
}

int ms_rank(const std::string& ms) {
  if (ms == "Small") return 0;
  if (ms == "Medium") return 1;
  return 2;
}

int task_rank(const std::string& task) {
  const auto& reg = task_registry();
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (reg[i].name == task) return static_cast<int>(i);
  return static_cast<int>(reg.size());
}

// shorter first, so D2 < D10 and 10M < 100M
bool natural_less(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

template <class Rank>
bool ranked_less(const std::string& a, const std::string& b, Rank rank) {
  const int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb;
  return natural_less(a, b);
}

bool task_less(const std::string& a, TaskKind ka, const std::string& b, TaskKind kb) {
  if (ka != kb) return ka == TaskKind::Regression;
  return ranked_less(a, b, task_rank);
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> label) {
  check_pair(pred, label, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - label[i];
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> label) {
  check_pair(pred, label, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - label[i]);
  return sum / static_cast<double>(pred.size());
}

double auc_roc(std::span<const double> scores, std::span<const double> labels) {
  check_pair(scores, labels, "auc_roc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("auc_roc: NaN score at " + std::to_string(i));
    if (labels[i] != 0.0 && labels[i] != 1.0) throw DataError("auc_roc: label is not 0 or 1");
  }
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Twice the U statistic, kept integral.
  std::uint64_t twice_u = 0, neg_below = 0, pos_total = 0, neg_total = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1.0 ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    pos_total += pos;
    neg_total += neg;
    i = j;
  }
  if (pos_total == 0 || neg_total == 0) throw DataError("auc_roc: both classes are required");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

bool key_less(const RunKey& a, const RunKey& b) {
  if (a.mt != b.mt) return ranked_less(a.mt, b.mt, mt_rank);
  if (a.ms != b.ms) return ranked_less(a.ms, b.ms, ms_rank);
  if (a.ds != b.ds) return natural_less(a.ds, b.ds);
  if (a.task != b.task) return task_less(a.task, a.task_kind, b.task, b.task_kind);
  return std::tie(a.iteration, a.mtr_epoch, a.ft_epoch) < std::tie(b.iteration, b.mtr_epoch, b.ft_epoch);
}

std::string to_string(const RunKey& k) {
  return k.mt + "/" + k.ms + "/" + k.ds + "/" + k.task + "/it" + std::to_string(k.iteration) + "/mtr" +
         std::to_string(k.mtr_epoch) + "/ft" + std::to_string(k.ft_epoch);
}

BestMetricsSet select_best(const std::vector<MetricRecord>& records, const GridAxes& axes_in, bool partial) {
  GridAxes axes = axes_in;
  std::set<std::string> mts, mss, dss;
  std::map<std::string, TaskKind> kinds;
  std::size_t max_it = 0, max_mtr = 0, max_ft = 0;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!std::isfinite(r.val_loss)) throw DataError("non-finite val_loss at " + to_string(r.key));
    if (!seen.insert(to_string(r.key)).second) throw DataError("duplicate record " + to_string(r.key));
    mts.insert(r.key.mt);
    mss.insert(r.key.ms);
    dss.insert(r.key.ds);
    auto [it, fresh] = kinds.emplace(r.key.task, r.key.task_kind);
    if (!fresh && it->second != r.key.task_kind)
      throw DataError("task " + r.key.task + " recorded with two kinds");
    max_it = std::max(max_it, r.key.iteration + 1);
    max_mtr = std::max(max_mtr, r.key.mtr_epoch + 1);
    max_ft = std::max(max_ft, r.key.ft_epoch + 1);
  }
  if (records.empty()) throw DataError("select_best: no records");

  if (!partial) {
    if (axes.mt.empty()) axes.mt.assign(mts.begin(), mts.end());
    if (axes.ms.empty()) axes.ms.assign(mss.begin(), mss.end());
    if (axes.ds.empty()) axes.ds.assign(dss.begin(), dss.end());
    if (axes.tasks.empty())
      for (const auto& [t, k] : kinds) axes.tasks.push_back(t);
    if (axes.iterations == 0) axes.iterations = max_it;
    if (axes.mtr_epochs == 0) axes.mtr_epochs = max_mtr;
    if (axes.ft_epochs == 0) axes.ft_epochs = max_ft;
    std::vector<std::string> missing;
    std::size_t missing_count = 0;
    for (const auto& mt : axes.mt)
      for (const auto& ms : axes.ms)
        for (const auto& ds : axes.ds)
          for (const auto& task : axes.tasks)
            for (std::size_t i = 0; i < axes.iterations; ++i)
              for (std::size_t e = 0; e < axes.mtr_epochs; ++e)
                for (std::size_t f = 0; f < axes.ft_epochs; ++f) {
                  const auto kind = kinds.contains(task) ? kinds[task] : TaskKind::Regression;
                  const RunKey key{mt, ms, ds, i, e, f, task, kind};
                  if (!seen.contains(to_string(key))) {
                    if (missing.size() < 20) missing.push_back(to_string(key));
                    ++missing_count;
                  }
                }
    if (missing_count > 0) {
      std::string msg = std::to_string(missing_count) + " grid cells missing:";
      for (const auto& m : missing) msg += "\n  " + m;
      if (missing_count > missing.size()) msg += "\n  ...";
      throw DataError(msg);
    }
  }

  using Cell = std::tuple<std::string, std::string, std::string, std::size_t, std::string>;
  std::map<Cell, const MetricRecord*> best;
  for (const auto& r : records) {
    const Cell cell{r.key.mt, r.key.ms, r.key.ds, r.key.iteration, r.key.task};
    auto [it, fresh] = best.emplace(cell, &r);
    if (fresh) continue;
    const MetricRecord& cur = *it->second;
    const bool better =
        r.val_loss < cur.val_loss ||
        (r.val_loss == cur.val_loss &&
         std::tie(r.key.mtr_epoch, r.key.ft_epoch) < std::tie(cur.key.mtr_epoch, cur.key.ft_epoch));
    if (better) it->second = &r;
  }
  BestMetricsSet out;
  out.reserve(best.size());
  for (const auto& [cell, rec] : best) out.push_back(*rec);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return key_less(a.key, b.key); });
  return out;
}

std::string_view grouping_name(Grouping g) {
  switch (g) {
    case Grouping::MT: return "MT";
    case Grouping::MTMS: return "MTMS";
    case Grouping::MTDS: return "MTDS";
    case Grouping::MSDS: return "MSDS";
  }
  return "?";
}

Grouping parse_grouping(std::string_view text) {
  for (auto g : all_groupings())
    if (grouping_name(g) == text) return g;
  throw UsageError("unknown grouping '" + std::string(text) + "' (MT, MTMS, MTDS, MSDS)");
}

std::vector<Grouping> all_groupings() { return {Grouping::MT, Grouping::MTMS, Grouping::MTDS, Grouping::MSDS}; }

std::string group_label(const RunKey& key, Grouping g) {
  std::string mt = key.mt;
  try {
    mt = std::string(family_report_name(parse_family(key.mt)));
  } catch (const std::exception&) {
  }
  switch (g) {
    case Grouping::MT: return mt;
    case Grouping::MTMS: return mt + " " + key.ms;
    case Grouping::MTDS: return mt + " " + key.ds;
    case Grouping::MSDS: return key.ms + " " + key.ds;
  }
  return mt;
}

namespace {

/// Group labels in canonical first-appearance order over a key-sorted set.
std::vector<std::string> ordered_groups(const BestMetricsSet& best, Grouping g) {
  std::vector<const MetricRecord*> sorted;
  for (const auto& r : best) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return key_less(a->key, b->key); });
  std::vector<std::string> labels;
  for (const auto* r : sorted) {
    auto label = group_label(r->key, g);
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(std::move(label));
  }
  return labels;
}

}  // namespace

std::vector<GroupAverage> group_average(const BestMetricsSet& best, Grouping g, const std::string& task) {
  std::map<std::string, GroupAverage> acc;
  for (const auto& r : best) {
    if (r.key.task != task) continue;
    auto& a = acc[group_label(r.key, g)];
    a.average += r.test_metric;
    ++a.count;
  }
  if (acc.empty()) throw DataError("no records for task " + task);
  std::vector<GroupAverage> out;
  for (const auto& label : ordered_groups(best, g)) {
    const auto it = acc.find(label);
    if (it == acc.end()) continue;
    GroupAverage a = it->second;
    a.group = label;
    a.average /= static_cast<double>(a.count);
    out.push_back(a);
  }
  return out;
}

double benchmark(std::span<const GroupAverage> averages, TaskKind kind) {
  if (averages.empty()) throw DataError("benchmark: no group averages");
  double b = averages[0].average;
  for (const auto& a : averages)
    b = kind == TaskKind::Regression ? std::min(b, a.average) : std::max(b, a.average);
  return b;
}

double deviation(double test_metric, double benchmark_value, TaskKind kind) {
  return kind == TaskKind::Regression ? test_metric - benchmark_value : benchmark_value - test_metric;
}

std::string_view es_mode_name(EsMode mode) { return mode == EsMode::Mean ? "mean" : "sum"; }

std::size_t GroupReport::best_tes(TaskKind kind) const {
  const int f = kind == TaskKind::Regression ? 0 : 1;
  std::size_t best = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::isnan(rows[i].tes[f])) continue;
    if (best == static_cast<std::size_t>(-1) || rows[i].tes[f] < rows[best].tes[f]) best = i;
  }
  return best;
}

std::size_t GroupReport::best_std(TaskKind kind) const {
  const int f = kind == TaskKind::Regression ? 0 : 1;
  std::size_t best = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::isnan(rows[i].std_dev[f])) continue;
    if (best == static_cast<std::size_t>(-1) || rows[i].std_dev[f] < rows[best].std_dev[f]) best = i;
  }
  return best;
}

GroupReport build_group_report(const BestMetricsSet& best, Grouping g, EsMode mode) {
  if (best.empty()) throw DataError("report: no records");
  GroupReport report;
  report.grouping = g;
  report.mode = mode;

  std::map<std::string, TaskKind> kinds;
  for (const auto& r : best) kinds.emplace(r.key.task, r.key.task_kind);
  for (const auto& [task, kind] : kinds) report.tasks.push_back({task, kind, 0.0, {}});
  std::sort(report.tasks.begin(), report.tasks.end(),
            [](const auto& a, const auto& b) { return task_less(a.task, a.kind, b.task, b.kind); });

  const auto labels = ordered_groups(best, g);
  const std::size_t nt = report.tasks.size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& label : labels) {
    GroupRow row;
    row.group = label;
    row.averages.assign(nt, nan);
    row.es.assign(nt, nan);
    report.rows.push_back(std::move(row));
  }

  // pooled deviations per group and family, for STD
  std::vector<std::array<std::vector<double>, 2>> pooled(labels.size());
  for (std::size_t t = 0; t < nt; ++t) {
    auto& ts = report.tasks[t];
    const auto avgs = group_average(best, g, ts.task);
    if (avgs.size() != labels.size()) {
      std::string absent;
      for (const auto& label : labels)
        if (std::none_of(avgs.begin(), avgs.end(), [&](const auto& a) { return a.group == label; }))
          absent += " " + label;
      throw DataError("task " + ts.task + " has no records for group(s):" + absent);
    }
    ts.benchmark = benchmark(avgs, ts.kind);
    for (const auto& a : avgs)
      if (a.average == ts.benchmark) {
        ts.benchmark_group = a.group;
        break;
      }
    std::vector<double> dev_sum(labels.size(), 0.0);
    for (const auto& r : best) {
      if (r.key.task != ts.task) continue;
      const auto gi = static_cast<std::size_t>(
          std::find(labels.begin(), labels.end(), group_label(r.key, g)) - labels.begin());
      const double d = deviation(r.test_metric, ts.benchmark, ts.kind);
      dev_sum[gi] += d;
      pooled[gi][ts.kind == TaskKind::Regression ? 0 : 1].push_back(d);
    }
    for (std::size_t gi = 0; gi < labels.size(); ++gi) {
      auto& row = report.rows[gi];
      row.averages[t] = avgs[gi].average;
      row.records_per_task = std::max(row.records_per_task, avgs[gi].count);
      row.es[t] = mode == EsMode::Mean ? deviation(avgs[gi].average, ts.benchmark, ts.kind) : dev_sum[gi];
    }
  }

  for (std::size_t gi = 0; gi < labels.size(); ++gi) {
    auto& row = report.rows[gi];
    for (int f = 0; f < 2; ++f) {
      const TaskKind kind = f == 0 ? TaskKind::Regression : TaskKind::Classification;
      bool any = false;
      double tes = 0.0;
      for (std::size_t t = 0; t < nt; ++t)
        if (report.tasks[t].kind == kind) {
          tes += row.es[t];
          any = true;
        }
      row.tes[f] = any ? tes : nan;
      const auto& devs = pooled[gi][f];
      if (devs.empty()) {
        row.std_dev[f] = nan;
        continue;
      }
      const double mean = std::accumulate(devs.begin(), devs.end(), 0.0) / static_cast<double>(devs.size());
      double ss = 0.0;
      for (double d : devs) ss += (d - mean) * (d - mean);
      row.std_dev[f] = std::sqrt(ss / static_cast<double>(devs.size()));
    }
  }
  return report;
}

}  // namespace molbench
