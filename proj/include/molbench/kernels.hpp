// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace molbench::kernels {

// Row-major dense kernels. Every kernel accumulates into its output
// (C += ...). The parallel variants split work by output row only, so each
// element is summed in the same order as the serial reference and results
// are bit-identical between the two.

namespace serial {
/// C[m x n] += A[m x k] * B[k x n]
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n);
/// C[m x n] += A[k x m]^T * B[k x n]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
/// C[m x n] += A[m x k] * B[n x k]^T
void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
/// In-place softmax of each row; entries equal to -inf become exactly 0.
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);
}  // namespace parallel

enum class Backend { Serial, Parallel, Auto };

/// Process-wide selection used by the dispatching entry points below.
/// Auto runs the OpenMP variant when the work is large enough and no
/// enclosing parallel region is active.
void set_backend(Backend backend);
Backend backend();

/// Number of OpenMP threads the parallel variants may use (1 without OpenMP).
int max_threads();

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);

}  // namespace molbench::kernels
