#include "kaliko/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace kaliko::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

std::atomic<int> g_threads{0};

int threads_from_env() {
  if (const char* env = std::getenv("KALIKO_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

void scale_output(std::size_t m, std::size_t n, double beta, double* c) {
  if (beta == 1.0) return;
  const std::size_t total = m * n;
  if (beta == 0.0) {
    std::fill(c, c + total, 0.0);
  } else {
    for (std::size_t i = 0; i < total; ++i) c[i] *= beta;
  }
}

std::vector<double> transpose_copy(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

// C += alpha * op(A) * B, B row-major k x n, with op(A)(i, p) = a[i * si + p * sp].
// Works on 4 x 8 tiles of C held in registers across the whole k loop.
void gemm_tiled(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* __restrict a,
                std::size_t si, std::size_t sp, const double* __restrict b, double* __restrict c, bool parallel) {
  const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t t = 0; t < row_tiles; ++t) {
    const std::size_t i0 = t * kTileRows;
    const std::size_t rows = std::min(kTileRows, m - i0);
    for (std::size_t j0 = 0; j0 < n; j0 += kTileCols) {
      const std::size_t cols = std::min(kTileCols, n - j0);
      double acc[kTileRows][kTileCols] = {};
      if (rows == kTileRows && cols == kTileCols) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* bp = b + p * n + j0;
          const double* ap = a + i0 * si + p * sp;
          for (std::size_t r = 0; r < kTileRows; ++r) {
            const double ar = ap[r * si];
#pragma omp simd
            for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += ar * bp[j];
          }
        }
      } else {
        for (std::size_t p = 0; p < k; ++p) {
          const double* bp = b + p * n + j0;
          for (std::size_t r = 0; r < rows; ++r) {
            const double ar = a[(i0 + r) * si + p * sp];
            for (std::size_t j = 0; j < cols; ++j) acc[r][j] += ar * bp[j];
          }
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double* cr = c + (i0 + r) * n + j0;
        for (std::size_t j = 0; j < cols; ++j) cr[j] += alpha * acc[r][j];
      }
    }
  }
}

}  // namespace

int thread_count() {
  int n = g_threads.load();
  if (n <= 0) {
    n = threads_from_env();
    g_threads.store(n);
  }
  return n;
}

void set_thread_count(int n) {
  g_threads.store(n);
  if (n > 0) omp_set_num_threads(n);
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  scale_output(m, n, beta, c);
  if (m == 0 || n == 0 || k == 0 || alpha == 0.0) return;
  const bool parallel = thread_count() > 1 && m > 1 && m * n * k >= kParallelWork;
  // op(B) must be row-major k x n for the inner loops.
  std::vector<double> bt;
  const double* bk = b;
  if (tb == Trans::yes) {
    bt = transpose_copy(b, n, k);
    bk = bt.data();
  }
  if (ta == Trans::no) {
    gemm_tiled(m, n, k, alpha, a, k, 1, bk, c, parallel);
  } else {
    gemm_tiled(m, n, k, alpha, a, 1, m, bk, c, parallel);
  }
}

void cholesky(double* a, std::size_t n, double rel_tol) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a[i * n + i]));
  const double floor = rel_tol * max_diag;
  for (std::size_t j = 0; j < n; ++j) {
    double* rj = a + j * n;
    double d = rj[j];
    for (std::size_t p = 0; p < j; ++p) d -= rj[p] * rj[p];
    if (!(d > floor) || max_diag == 0.0)
      throw SingularMatrix("cholesky pivot " + std::to_string(j) + " = " + std::to_string(d) +
                           " below threshold " + std::to_string(floor));
    const double ljj = std::sqrt(d);
    rj[j] = ljj;
    const double inv = 1.0 / ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double* ri = a + i * n;
      // symmetric part of the input: (a_ij + a_ji) / 2 read from the untouched triangles
      double s = 0.5 * (ri[j] + rj[i]);
      for (std::size_t p = 0; p < j; ++p) s -= ri[p] * rj[p];
      ri[j] = s * inv;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
}

void cholesky_solve(const double* l, std::size_t n, double* b, std::size_t nrhs) {
  // forward: L Y = B
  for (std::size_t i = 0; i < n; ++i) {
    double* bi = b + i * nrhs;
    const double* li = l + i * n;
    for (std::size_t p = 0; p < i; ++p) {
      const double s = li[p];
      const double* bp = b + p * nrhs;
#pragma omp simd
      for (std::size_t j = 0; j < nrhs; ++j) bi[j] -= s * bp[j];
    }
    const double inv = 1.0 / li[i];
    for (std::size_t j = 0; j < nrhs; ++j) bi[j] *= inv;
  }
  // backward: L^T X = Y
  for (std::size_t ii = n; ii-- > 0;) {
    double* bi = b + ii * nrhs;
    for (std::size_t p = ii + 1; p < n; ++p) {
      const double s = l[p * n + ii];
      const double* bp = b + p * nrhs;
#pragma omp simd
      for (std::size_t j = 0; j < nrhs; ++j) bi[j] -= s * bp[j];
    }
    const double inv = 1.0 / l[ii * n + ii];
    for (std::size_t j = 0; j < nrhs; ++j) bi[j] *= inv;
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::no ? b[p * n + j] : b[j * k + p];
        s += av * bv;
      }
      c[i * n + j] = (beta == 0.0 ? 0.0 : beta * c[i * n + j]) + alpha * s;
    }
  }
}

void cholesky(double* a, std::size_t n, double rel_tol) {
  std::vector<double> sym(n * n);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
    max_diag = std::max(max_diag, std::abs(a[i * n + i]));
  }
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = sym[j * n + j];
    for (std::size_t p = 0; p < j; ++p) d -= l[j * n + p] * l[j * n + p];
    if (!(d > rel_tol * max_diag) || max_diag == 0.0)
      throw SingularMatrix("cholesky pivot " + std::to_string(j) + " below threshold");
    l[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = sym[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= l[i * n + p] * l[j * n + p];
      l[i * n + j] = s / l[j * n + j];
    }
  }
  std::copy(l.begin(), l.end(), a);
}

void cholesky_solve(const double* l, std::size_t n, double* b, std::size_t nrhs) {
  for (std::size_t col = 0; col < nrhs; ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i * nrhs + col];
      for (std::size_t p = 0; p < i; ++p) s -= l[i * n + p] * b[p * nrhs + col];
      b[i * nrhs + col] = s / l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i * nrhs + col];
      for (std::size_t p = i + 1; p < n; ++p) s -= l[p * n + i] * b[p * nrhs + col];
      b[i * nrhs + col] = s / l[i * n + i];
    }
  }
}

}  // namespace serial

}  // namespace kaliko::kernels
