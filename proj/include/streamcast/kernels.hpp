#pragma once

#include <cstddef>

// Dense kernels backing the tensor ops. Every kernel exists in two variants:
// a serial reference and an OpenMP version that parallelizes across
// independent output elements only. Because each output element keeps its own
// fixed left-to-right reduction order, the two variants are bitwise identical
// for any thread count; tests assert this and the bench target compares them.

namespace streamcast::kernels {

// Global thread budget for the OpenMP variants (and for episode-level
// parallelism in the streaming harness). 1 selects the serial reference path.
void set_max_threads(int n);
int max_threads();

// C[m x n] = A[m x k] * B[k x n], row-major.
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// C[m x n] = A[k x m]^T * B[k x n]  (used by matmul backward: dB = A^T dC).
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// C[m x n] = A[m x k] * B[n x k]^T  (used by matmul backward: dA = dC B^T).
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_omp(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// Row-wise softmax with max shift. x and y are [rows x cols].
void softmax_rows_serial(const double* x, double* y, std::size_t rows, std::size_t cols);
void softmax_rows_omp(const double* x, double* y, std::size_t rows, std::size_t cols);

// Row-wise layer normalization: y = (x - mean) * rstd * gain + bias.
// mean/rstd are per-row scratch outputs needed by the backward pass.
void layernorm_rows_serial(const double* x, const double* gain, const double* bias,
                           double eps, double* y, double* mean, double* rstd,
                           std::size_t rows, std::size_t cols);
void layernorm_rows_omp(const double* x, const double* gain, const double* bias,
                        double eps, double* y, double* mean, double* rstd,
                        std::size_t rows, std::size_t cols);

// Dispatchers: pick the OpenMP variant when the thread budget allows and the
// problem is big enough to be worth forking, else the serial reference.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, double* mean, double* rstd,
                    std::size_t rows, std::size_t cols);

}  // namespace streamcast::kernels
