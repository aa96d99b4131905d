// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference implementations written directly from the definitions, shared
// by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <regex>
#include <string>
#include <vector>

#include "molbench/metrics.hpp"
#include "molbench/model.hpp"

namespace molbench::test {

/// Pair-counting Mann-Whitney statistic, O(P * N).
inline double auc_pairs(const std::vector<double>& s, const std::vector<double>& y) {
  double num = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] == 1) ++pos; else ++neg;
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / (pos * neg);
}

inline double lr_oracle(std::size_t s, std::size_t W, std::size_t T, double peak, double eta_min) {
  if (s <= W) return peak * static_cast<double>(s == 0 ? 1 : s) / static_cast<double>(W);
  const double t = static_cast<double>(s - W) / static_cast<double>(T - W);
  return eta_min + 0.5 * (peak - eta_min) * (1.0 + std::cos(std::numbers::pi * t));
}

/// Hand-summed parameter count per family (weights, biases, norms, head).
inline std::size_t closed_form_params(const ModelConfig& c) {
  const std::size_t d = c.hidden_size, I = c.intermediate_size, L = c.num_layers, V = c.vocab_size, P = c.num_properties;
  const std::size_t pos = c.max_positions * d;
  const std::size_t head = d * P + P;
  const std::size_t attn_b = 4 * (d * d + d);
  const std::size_t enc_layer = attn_b + 2 * d + (d * I + I) + (I * d + d) + 2 * d;
  switch (c.family) {
    case ModelFamily::Encoder: return V * d + pos + 2 * d + L * enc_layer + head;
    case ModelFamily::Decoder: return V * d + L * (d + 4 * d * d + d + 3 * d * I) + d + head;
    case ModelFamily::EncoderDecoder: {
      const std::size_t dec_layer = attn_b + 2 * d + attn_b + 2 * d + (d * I + I) + (I * d + d) + 2 * d;
      return V * d + 2 * (pos + 2 * d) + L * enc_layer + L * dec_layer + head;
    }
  }
  return 0;
}

/// Hyndman-Fan type 7 quantile.
inline double quantile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// The usual SMILES regex restricted to the promised token classes
/// (bracket atoms, Cl, Br, @@, %NN, single chars).
inline std::vector<std::string> regex_tokens(const std::string& s) {
  static const std::regex re(R"(\[[^\]]+\]|Br|Cl|@@|%[0-9]{2}|.)");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back(it->str());
  return out;
}

struct OracleRow {
  double tes[2] = {0, 0};
  double std_dev[2] = {NAN, NAN};
};

/// Five-step aggregation with per-record deviations; ES as their mean.
inline std::map<std::string, OracleRow> tes_oracle(const BestMetricsSet& best, Grouping g) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by;  // task -> group -> metrics
  std::map<std::string, TaskKind> kinds;
  for (const auto& r : best) {
    by[r.key.task][group_label(r.key, g)].push_back(r.test_metric);
    kinds[r.key.task] = r.key.task_kind;
  }
  std::map<std::string, OracleRow> rows;
  std::map<std::string, std::vector<double>> pooled[2];
  bool has[2] = {false, false};
  for (const auto& [task, groups] : by) {
    const int fam = kinds[task] == TaskKind::Regression ? 0 : 1;
    has[fam] = true;
    double bench = fam == 0 ? 1e300 : -1e300;
    for (const auto& [grp, v] : groups) {
      double s = 0;
      for (double x : v) s += x;
      const double avg = s / static_cast<double>(v.size());
      bench = fam == 0 ? std::min(bench, avg) : std::max(bench, avg);
    }
    for (const auto& [grp, v] : groups) {
      double es = 0;
      for (double x : v) {
        const double dev = fam == 0 ? x - bench : bench - x;
        es += dev;
        pooled[fam][grp].push_back(dev);
      }
      rows[grp].tes[fam] += es / static_cast<double>(v.size());
    }
  }
  for (auto& [grp, row] : rows) {
    for (int fam = 0; fam < 2; ++fam) {
      if (!has[fam]) {
        row.tes[fam] = NAN;
        continue;
      }
      const auto& d = pooled[fam][grp];
      double m = 0, q = 0;
      for (double x : d) m += x;
      m /= static_cast<double>(d.size());
      for (double x : d) q += (x - m) * (x - m);
      row.std_dev[fam] = std::sqrt(q / static_cast<double>(d.size()));
    }
  }
  return rows;
}

}  // namespace molbench::test
