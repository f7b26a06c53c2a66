#pragma once

#include <cstdint>

namespace physvox::kernels {

// Dense row-major GEMM variants, C += op(A)*op(B). The `ref::` versions are
// straightforward serial loops kept as the test oracle and benchmark baseline;
// the unprefixed versions are the blocked OpenMP kernels used everywhere else.
// Both accumulate along k in ascending order for every (i,j), and the parallel
// kernels only split the output space across threads, so results do not depend
// on the thread count.

namespace ref {
void gemm_nn(const double* A, const double* B, double* C, int M, int K, int N);
void gemm_tn(const double* A, const double* B, double* C, int M, int K, int N);  // A is KxM
void gemm_nt(const double* A, const double* B, double* C, int M, int K, int N);  // B is NxK
}  // namespace ref

void gemm_nn(const double* A, const double* B, double* C, int M, int K, int N);
void gemm_tn(const double* A, const double* B, double* C, int M, int K, int N);
void gemm_nt(const double* A, const double* B, double* C, int M, int K, int N);

// im2col / col2im for 3-D convolution over a [C, D, H, W] volume.
// col has shape [C*k^3, outD*outH*outW]; out-of-bounds taps read as zero.
void im2col3d(const double* x, int C, int D, int H, int W, int k, int stride, int pad,
              double* col, int outD, int outH, int outW);
// col2im scatters back with += into x (caller zeroes first). Parallel over C,
// so every output element is owned by one thread.
void col2im3d(const double* col, int C, int D, int H, int W, int k, int stride, int pad,
              double* x, int outD, int outH, int outW);

// Dot product reduced over fixed-size blocks then summed in block order, so the
// result is independent of the number of threads.
double det_dot(const double* a, const double* b, int64_t n);
double det_sumsq(const double* a, int64_t n);

void axpy(double alpha, const double* x, double* y, int64_t n);  // y += alpha*x
void xpby(const double* x, double beta, double* y, int64_t n);   // y = x + beta*y

}  // namespace physvox::kernels
