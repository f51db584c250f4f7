#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace kaliko {

/// Raised when a symmetric positive-definite factorization meets a pivot
/// below the relative threshold.
class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace kernels {

enum class Trans { no, yes };

// C(m x n) = alpha * op(A) * op(B) + beta * C, all row-major.
// op(A) is m x k, op(B) is k x n.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

// In-place lower Cholesky factor of the symmetric part of an n x n matrix.
// Throws SingularMatrix when a pivot drops below rel_tol * max diagonal.
void cholesky(double* a, std::size_t n, double rel_tol = 1e-12);

// Solves L L^T X = B in place for B with nrhs columns (row-major n x nrhs).
void cholesky_solve(const double* l, std::size_t n, double* b, std::size_t nrhs);

// Numerically safe operations used by the tape when elementwise loops dominate.
void axpy(std::size_t n, double alpha, const double* x, double* y);

/// Number of threads the parallel kernels use; honours KALIKO_THREADS.
int thread_count();
void set_thread_count(int n);

/// Straightforward reference implementations kept for testing and benchmarks.
namespace serial {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c);
void cholesky(double* a, std::size_t n, double rel_tol = 1e-12);
void cholesky_solve(const double* l, std::size_t n, double* b, std::size_t nrhs);
}  // namespace serial

}  // namespace kernels
}  // namespace kaliko
