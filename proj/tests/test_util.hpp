// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "molbench/autodiff.hpp"

namespace molbench::test {

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(MOLBENCH_TEST_DATA) / name; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("molbench_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ad::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& gen, double scale = 1.0) {
  ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = u(gen);
  return t;
}

/// Central-difference check of every trainable scalar in params.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
inline double max_grad_error(const std::vector<ad::Parameter*>& params,
                             const std::function<ad::Var(ad::Tape&)>& loss, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  double worst = 0.0;
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up, down;
      {
        ad::Tape t;
        up = loss(t).value()[0];
      }
      p->value[i] = saved - h;
      {
        ad::Tape t;
        down = loss(t).value()[0];
      }
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace molbench::test
