#pragma once

#include "curlyfm/matrix.hpp"

// Dense kernels behind the MLP, the tape and the transport costs.
//
// The default kernels split output rows across OpenMP threads. Every output
// element is accumulated by one thread in a fixed order, so results do not
// depend on the thread count. The `reference` namespace keeps plain serial
// triple loops for testing and benchmarking.

namespace curlyfm::kernels {

/// C = A * B^T   (A: n x k, B: m x k, C: n x m)
Matrix gemm_nt(const Matrix& a, const Matrix& b);
/// C = A * B     (A: n x k, B: k x m)
Matrix gemm_nn(const Matrix& a, const Matrix& b);
/// C = A^T * B   (A: n x k, B: n x m, C: k x m)
Matrix gemm_tn(const Matrix& a, const Matrix& b);

/// D(i, j) = ||a_i - b_j||^2
Matrix pairwise_sqdist(const Matrix& a, const Matrix& b);

/// Number of OpenMP threads the kernels will use.
int max_threads();

namespace reference {

Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gemm_nn(const Matrix& a, const Matrix& b);
Matrix gemm_tn(const Matrix& a, const Matrix& b);
Matrix pairwise_sqdist(const Matrix& a, const Matrix& b);

}  // namespace reference

}  // namespace curlyfm::kernels
