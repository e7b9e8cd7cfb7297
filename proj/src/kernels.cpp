#include "curlyfm/kernels.hpp"

#include <omp.h>

#include "curlyfm/errors.hpp"

namespace curlyfm::kernels {

namespace {

// Rows below this count run on the calling thread; the fork/join is not worth it.
constexpr std::size_t kParallelRows = 64;

void check_inner(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": inner dimensions differ");
}

// C += A * B. Each C element is accumulated over p in ascending order, in a
// 4 x 16 register tile when the shape allows, so tiling does not change the
// rounding and each C row depends only on one A row.
constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

void gemm_tile(const double* ap, const double* bp, double* cp, std::size_t k, std::size_t m, std::size_t i0,
               std::size_t j0) {
  double acc[kTileRows][kTileCols];
  for (std::size_t ii = 0; ii < kTileRows; ++ii)
    for (std::size_t jj = 0; jj < kTileCols; ++jj) acc[ii][jj] = cp[(i0 + ii) * m + j0 + jj];
  for (std::size_t p = 0; p < k; ++p) {
    const double* bk = bp + p * m + j0;
    for (std::size_t ii = 0; ii < kTileRows; ++ii) {
      const double s = ap[(i0 + ii) * k + p];
#pragma omp simd
      for (std::size_t jj = 0; jj < kTileCols; ++jj) acc[ii][jj] += s * bk[jj];
    }
  }
  for (std::size_t ii = 0; ii < kTileRows; ++ii)
    for (std::size_t jj = 0; jj < kTileCols; ++jj) cp[(i0 + ii) * m + j0 + jj] = acc[ii][jj];
}

void gemm_row_range(const double* ap, const double* bp, double* cp, std::size_t k, std::size_t m, std::size_t i,
                    std::size_t j_begin) {
  double* ci = cp + i * m;
  const double* ai = ap + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double s = ai[p];
    const double* bk = bp + p * m;
#pragma omp simd
    for (std::size_t j = j_begin; j < m; ++j) ci[j] += s * bk[j];
  }
}

void gemm_nn_rows(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const std::size_t tiles = n / kTileRows;
  const std::size_t full_cols = m - m % kTileCols;
#pragma omp parallel for schedule(static) if (n >= kParallelRows)
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t i0 = t * kTileRows;
    for (std::size_t j0 = 0; j0 < full_cols; j0 += kTileCols) gemm_tile(ap, bp, cp, k, m, i0, j0);
    if (full_cols < m)
      for (std::size_t ii = 0; ii < kTileRows; ++ii) gemm_row_range(ap, bp, cp, k, m, i0 + ii, full_cols);
  }
  for (std::size_t i = tiles * kTileRows; i < n; ++i) gemm_row_range(ap, bp, cp, k, m, i, 0);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "gemm_nn");
  Matrix c(a.rows(), b.cols());
  gemm_nn_rows(a, b, c);
  return c;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "gemm_nt");
  const Matrix bt = b.transposed();
  Matrix c(a.rows(), b.rows());
  gemm_nn_rows(a, bt, c);
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "gemm_tn");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(k, m);
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  // Output row p sums over the batch in index order.
#pragma omp parallel for schedule(static) if (k >= 8 && n * m >= 4096)
  for (std::size_t p = 0; p < k; ++p) {
    double* cr = cp + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = ap[i * k + p];
      const double* bi = bp + i * m;
#pragma omp simd
      for (std::size_t j = 0; j < m; ++j) cr[j] += s * bi[j];
    }
  }
  return c;
}

Matrix pairwise_sqdist(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "pairwise_sqdist");
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  Matrix out(n, m);
#pragma omp parallel for schedule(static) if (n >= kParallelRows)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * d;
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = ai[p] - bj[p];
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

namespace reference {

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "gemm_nt");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "gemm_nn");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "gemm_tn");
  Matrix c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.cols(); ++p)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, p) * b(i, j);
      c(p, j) = s;
    }
  return c;
}

Matrix pairwise_sqdist(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "pairwise_sqdist");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = squared_distance(a.row(i), b.row(j));
  return out;
}

}  // namespace reference

}  // namespace curlyfm::kernels
