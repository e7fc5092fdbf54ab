#include "streamcast/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>

namespace streamcast::kernels {

namespace {

std::atomic<int> g_max_threads{1};

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelFlopThreshold = 64 * 1024;

inline bool use_parallel(std::size_t work) {
  return g_max_threads.load(std::memory_order_relaxed) > 1 && work >= kParallelFlopThreshold;
}

inline void matmul_row(const double* a_row, const double* b, double* c_row,
                       std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double aval = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += aval * b_row[j];
  }
}

inline void matmul_nt_row(const double* a_row, const double* b, double* c_row,
                          std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = acc;
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c_row,
                          std::size_t i, std::size_t m, std::size_t k, std::size_t n) {
  // c_row = row i of A^T B where A is [k x m]: c[i][j] = sum_p A[p][i] B[p][j].
  for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double aval = a[p * m + i];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += aval * b_row[j];
  }
}

inline void softmax_row(const double* x, double* y, std::size_t cols) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double denom = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    denom += y[j];
  }
  const double inv = 1.0 / denom;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layernorm_row(const double* x, const double* gain, const double* bias,
                          double eps, double* y, double* mean, double* rstd,
                          std::size_t cols) {
  double mu = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mu += x[j];
  mu /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = x[j] - mu;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double rs = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gain[j] + bias[j];
  *mean = mu;
  *rstd = rs;
}

}  // namespace

void set_max_threads(int n) { g_max_threads.store(std::max(1, n), std::memory_order_relaxed); }
int max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    matmul_row(a + i * k, b, c + i * n, k, n);
  }
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_tn_row(a, b, c + i * n, i, m, k, n);
}

void matmul_tn_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    matmul_tn_row(a, b, c + i * n, i, m, k, n);
  }
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a + i * k, b, c + i * n, k, n);
}

void matmul_nt_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    matmul_nt_row(a + i * k, b, c + i * n, k, n);
  }
}

void softmax_rows_serial(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

void softmax_rows_omp(const double* x, double* y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
    softmax_row(x + i * cols, y + i * cols, cols);
  }
}

void layernorm_rows_serial(const double* x, const double* gain, const double* bias,
                           double eps, double* y, double* mean, double* rstd,
                           std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    layernorm_row(x + i * cols, gain, bias, eps, y + i * cols, mean + i, rstd + i, cols);
  }
}

void layernorm_rows_omp(const double* x, const double* gain, const double* bias,
                        double eps, double* y, double* mean, double* rstd,
                        std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
    layernorm_row(x + i * cols, gain, bias, eps, y + i * cols, mean + i, rstd + i, cols);
  }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    matmul_omp(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    matmul_tn_omp(a, b, c, m, k, n);
  } else {
    matmul_tn_serial(a, b, c, m, k, n);
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) {
    matmul_nt_omp(a, b, c, m, k, n);
  } else {
    matmul_nt_serial(a, b, c, m, k, n);
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (use_parallel(rows * cols * 8)) {
    softmax_rows_omp(x, y, rows, cols);
  } else {
    softmax_rows_serial(x, y, rows, cols);
  }
}

void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, double* mean, double* rstd,
                    std::size_t rows, std::size_t cols) {
  if (use_parallel(rows * cols * 8)) {
    layernorm_rows_omp(x, gain, bias, eps, y, mean, rstd, rows, cols);
  } else {
    layernorm_rows_serial(x, gain, bias, eps, y, mean, rstd, rows, cols);
  }
}

}  // namespace streamcast::kernels
