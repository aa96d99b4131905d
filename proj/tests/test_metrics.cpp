// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "molbench/error.hpp"
#include "molbench/metrics.hpp"
#include "oracles.hpp"

using namespace molbench;

namespace {

const std::vector<std::string> kMt{"Encoder", "Decoder", "EncoderDecoder"};
const std::vector<std::string> kMs{"Small", "Medium"};
const std::vector<std::string> kDs{"D1", "D2", "D3"};
const std::vector<std::pair<std::string, TaskKind>> kTasks{{"delaney", TaskKind::Regression},
                                                           {"lipo", TaskKind::Regression},
                                                           {"hiv", TaskKind::Classification}};

std::vector<MetricRecord> full_grid(std::size_t iters, std::size_t me, std::size_t fe, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricRecord> out;
  for (const auto& mt : kMt)
    for (const auto& ms : kMs)
      for (const auto& ds : kDs)
        for (const auto& [task, kind] : kTasks)
          for (std::size_t it = 0; it < iters; ++it)
            for (std::size_t a = 0; a < me; ++a)
              for (std::size_t b = 0; b < fe; ++b)
                out.push_back({{mt, ms, ds, it, a, b, task, kind}, u(gen), u(gen)});
  return out;
}

}  // namespace

TEST(Metrics, RmseMae) {
  const std::vector<double> p{3, -4}, z{0, 0};
  EXPECT_NEAR(rmse(p, z), std::sqrt(12.5), 1e-15);
  EXPECT_DOUBLE_EQ(mae(p, z), 3.5);
  EXPECT_EQ(rmse(p, p), 0.0);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n;
  std::vector<double> a(100), b(100);
  double ss = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    a[i] = n(gen);
    b[i] = n(gen);
    ss += (a[i] - b[i]) * (a[i] - b[i]);
  }
  EXPECT_NEAR(rmse(a, b) * rmse(a, b), ss / 100, 1e-12);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), DataError);
  EXPECT_THROW(mae(std::vector<double>{1}, std::vector<double>{1, 2}), DataError);
}

TEST(Metrics, AucExamples) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  EXPECT_EQ(auc_roc(s, std::vector<double>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc_roc(s, std::vector<double>{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc_roc(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), 0.5);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), DataError);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, std::nan("")}, std::vector<double>{1, 0}), DataError);
}

TEST(Metrics, AucMatchesPairCountExactly) {
  std::mt19937_64 gen(7);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + gen() % 60;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(gen() % 12) / 4.0;  // frequent ties
      y[i] = static_cast<double>(gen() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    ASSERT_EQ(auc_roc(s, y), test::auc_pairs(s, y)) << c;
  }
}

TEST(SelectBest, AccountingOnFullGrid) {
  const auto rec = full_grid(5, 7, 7, 3);
  EXPECT_EQ(rec.size(), 18u * 3 * 245);
  GridAxes axes{kMt, kMs, kDs, {"delaney", "lipo", "hiv"}, 5, 7, 7};
  const auto best = select_best(rec, axes);
  EXPECT_EQ(best.size(), 90u * 3);
  std::map<std::string, std::size_t> per_task;
  for (const auto& b : best) ++per_task[b.key.task];
  for (const auto& [t, n] : per_task) EXPECT_EQ(n, 90u) << t;

  std::map<std::string, double> lowest;
  for (const auto& r : rec) {
    auto k = r.key;
    k.mtr_epoch = k.ft_epoch = 0;
    const auto s = to_string(k);
    if (!lowest.count(s) || r.val_loss < lowest[s]) lowest[s] = r.val_loss;
  }
  for (const auto& b : best) {
    auto k = b.key;
    k.mtr_epoch = k.ft_epoch = 0;
    EXPECT_EQ(b.val_loss, lowest[to_string(k)]);
  }
}

TEST(SelectBest, TieBreakAndMissingCells) {
  std::vector<MetricRecord> rec;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      rec.push_back({{"Encoder", "Small", "D1", 0, a, b, "lipo", TaskKind::Regression}, 0.5, double(a * 2 + b)});
  rec[0].val_loss = 0.7;
  auto best = select_best(rec);
  ASSERT_EQ(best.size(), 1u);
  EXPECT_EQ(best[0].key.mtr_epoch, 0u);
  EXPECT_EQ(best[0].key.ft_epoch, 1u);

  rec.pop_back();
  try {
    select_best(rec);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("mtr1/ft1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(select_best(rec, {}, true).size(), 1u);
  rec.push_back(rec[0]);
  EXPECT_THROW(select_best(rec, {}, true), DataError);
}

TEST(Groups, AveragesBenchmarkDeviation) {
  BestMetricsSet best{{{"Encoder", "Small", "D1", 0, 0, 0, "lipo", TaskKind::Regression}, 0, 0.8},
                      {{"Encoder", "Medium", "D1", 0, 0, 0, "lipo", TaskKind::Regression}, 0, 1.0},
                      {{"Decoder", "Small", "D1", 0, 0, 0, "lipo", TaskKind::Regression}, 0, 0.7}};
  const auto avg = group_average(best, Grouping::MT, "lipo");
  ASSERT_EQ(avg.size(), 2u);
  EXPECT_EQ(avg[0].group, "ChemBERTa");
  EXPECT_DOUBLE_EQ(avg[0].average, 0.9);
  EXPECT_EQ(avg[0].count, 2u);
  EXPECT_EQ(avg[1].group, "ChemLLaMA");
  EXPECT_THROW(group_average(best, Grouping::MT, "hiv"), DataError);

  const std::vector<GroupAverage> r{{"a", 0.9, 1}, {"b", 0.7, 1}}, c{{"a", 0.8, 1}, {"b", 0.75, 1}};
  EXPECT_EQ(benchmark(r, TaskKind::Regression), 0.7);
  EXPECT_EQ(benchmark(c, TaskKind::Classification), 0.8);
  EXPECT_NEAR(deviation(0.75, 0.70, TaskKind::Regression), 0.05, 1e-15);
  EXPECT_NEAR(deviation(0.85, 0.80, TaskKind::Classification), -0.05, 1e-15);
  EXPECT_EQ(deviation(0.8, 0.8, TaskKind::Classification), 0.0);
  EXPECT_EQ(group_label(best[1].key, Grouping::MTMS), "ChemBERTa Medium");
  EXPECT_EQ(group_label(best[1].key, Grouping::MSDS), "Medium D1");
}

TEST(GroupReport, HandBuiltFixture) {
  // two groups, two regression tasks, one record each
  BestMetricsSet best{{{"Encoder", "Small", "D1", 0, 0, 0, "delaney", TaskKind::Regression}, 0, 1.0},
                      {{"Decoder", "Small", "D1", 0, 0, 0, "delaney", TaskKind::Regression}, 0, 1.5},
                      {{"Encoder", "Small", "D1", 0, 0, 0, "lipo", TaskKind::Regression}, 0, 0.9},
                      {{"Decoder", "Small", "D1", 0, 0, 0, "lipo", TaskKind::Regression}, 0, 0.6}};
  const auto rep = build_group_report(best, Grouping::MT);
  ASSERT_EQ(rep.rows.size(), 2u);
  // ChemBERTa: devs 0, 0.3 ; ChemLLaMA: devs 0.5, 0
  EXPECT_NEAR(rep.rows[0].tes[0], 0.3, 1e-15);
  EXPECT_NEAR(rep.rows[0].std_dev[0], 0.15, 1e-15);
  EXPECT_NEAR(rep.rows[1].tes[0], 0.5, 1e-15);
  EXPECT_NEAR(rep.rows[1].std_dev[0], 0.25, 1e-15);
  EXPECT_TRUE(std::isnan(rep.rows[0].tes[1]));
  EXPECT_EQ(rep.best_tes(TaskKind::Regression), 0u);
  EXPECT_EQ(rep.best_tes(TaskKind::Classification), static_cast<std::size_t>(-1));
  EXPECT_EQ(rep.tasks[0].benchmark_group, "ChemBERTa");
  EXPECT_EQ(rep.tasks[1].benchmark_group, "ChemLLaMA");

  best.pop_back();
  EXPECT_THROW(build_group_report(best, Grouping::MT), DataError);
}

TEST(GroupReport, MatchesBruteForceOracle) {
  const auto best = select_best(full_grid(5, 2, 2, 11));
  for (auto g : all_groupings()) {
    const auto rep = build_group_report(best, g);
    const auto want = test::tes_oracle(best, g);
    ASSERT_EQ(rep.rows.size(), want.size());
    for (const auto& row : rep.rows) {
      const auto& o = want.at(row.group);
      for (int f = 0; f < 2; ++f) {
        EXPECT_NEAR(row.tes[f], o.tes[f], 1e-12) << row.group;
        EXPECT_NEAR(row.std_dev[f], o.std_dev[f], 1e-12) << row.group;
      }
    }
    const std::size_t expected_rows = g == Grouping::MT ? 3 : g == Grouping::MTDS ? 9 : 6;
    EXPECT_EQ(rep.rows.size(), expected_rows);
    EXPECT_EQ(rep.tasks[0].kind, TaskKind::Regression);
    EXPECT_EQ(rep.tasks.back().kind, TaskKind::Classification);
  }
}

TEST(GroupReport, BenchmarkGroupHasZeroEs) {
  const auto best = select_best(full_grid(5, 2, 2, 12));
  const auto rep = build_group_report(best, Grouping::MTMS);
  for (std::size_t t = 0; t < rep.tasks.size(); ++t) {
    std::size_t hits = 0;
    for (const auto& row : rep.rows) {
      if (row.group == rep.tasks[t].benchmark_group) {
        EXPECT_EQ(row.es[t], 0.0);
        ++hits;
      } else {
        EXPECT_GT(row.es[t], 0.0);
      }
    }
    EXPECT_EQ(hits, 1u);
  }
  const auto sum = build_group_report(best, Grouping::MTMS, EsMode::Sum);
  for (std::size_t r = 0; r < rep.rows.size(); ++r)
    for (std::size_t t = 0; t < rep.tasks.size(); ++t)
      EXPECT_NEAR(sum.rows[r].es[t], rep.rows[r].es[t] * static_cast<double>(rep.rows[r].records_per_task), 1e-12);
}

TEST(GroupReport, ConstantShiftInvariance) {
  auto best = select_best(full_grid(5, 2, 2, 13));
  const auto base = build_group_report(best, Grouping::MTDS);
  for (auto& r : best)
    if (r.key.task == "delaney") r.test_metric += 3.25;
  const auto shifted = build_group_report(best, Grouping::MTDS);
  for (std::size_t r = 0; r < base.rows.size(); ++r) {
    EXPECT_NEAR(shifted.rows[r].averages[0], base.rows[r].averages[0] + 3.25, 1e-12);
    EXPECT_NEAR(shifted.rows[r].es[0], base.rows[r].es[0], 1e-12);
    EXPECT_NEAR(shifted.rows[r].tes[0], base.rows[r].tes[0], 1e-12);
  }
  EXPECT_EQ(shifted.best_tes(TaskKind::Regression), base.best_tes(TaskKind::Regression));
}

TEST(GroupReport, MtGroupsAggregateThirtyBestRecords) {
  const auto best = select_best(full_grid(5, 1, 1, 14));
  for (const auto& a : group_average(best, Grouping::MT, "lipo")) EXPECT_EQ(a.count, 30u);
  const auto rep = build_group_report(best, Grouping::MT);
  for (const auto& row : rep.rows) EXPECT_EQ(row.records_per_task, 30u);
}
