// SPDX-License-Identifier: Apache-2.0
#include "molbench/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace molbench::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Auto};

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = std::size_t{1} << 17;

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void matmul_at_b_row(const double* a, const double* b, double* c_row, std::size_t i,
                            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void matmul_a_bt_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                            std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a_row[p] * b_row[p];
    c_row[j] += s;
  }
}

inline void softmax_row(double* x, std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    x[j] = x[j] == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(x[j] - mx);
    sum += x[j];
  }
  for (std::size_t j = 0; j < cols; ++j) x[j] /= sum;
}

bool use_parallel(std::size_t work) {
  switch (g_backend.load(std::memory_order_relaxed)) {
    case Backend::Serial: return false;
    case Backend::Parallel: return true;
    case Backend::Auto: break;
  }
#ifdef _OPENMP
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

namespace serial {

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_at_b_row(a.data(), b.data(), c.data() + i * n, i, m, k, n);
}

void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_a_bt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data() + r * cols, cols);
}

}  // namespace serial

namespace parallel {

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_at_b_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
  }
}

void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_a_bt_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) softmax_row(x.data() + static_cast<std::size_t>(r) * cols, cols);
}

}  // namespace parallel

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul_acc(a, b, c, m, k, n);
  } else {
    serial::matmul_acc(a, b, c, m, k, n);
  }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul_at_b_acc(a, b, c, m, k, n);
  } else {
    serial::matmul_at_b_acc(a, b, c, m, k, n);
  }
}

void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::matmul_a_bt_acc(a, b, c, m, k, n);
  } else {
    serial::matmul_a_bt_acc(a, b, c, m, k, n);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  if (use_parallel(rows * cols * 8)) {
    parallel::softmax_rows(x, rows, cols);
  } else {
    serial::softmax_rows(x, rows, cols);
  }
}

}  // namespace molbench::kernels
