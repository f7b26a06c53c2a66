#include "physvox/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace physvox::kernels {

namespace ref {

void gemm_nn(const double* A, const double* B, double* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<int64_t>(i) * K + k];
            const double* brow = B + static_cast<int64_t>(k) * N;
            double* crow = C + static_cast<int64_t>(i) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
}

void gemm_tn(const double* A, const double* B, double* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<int64_t>(k) * M + i];
            const double* brow = B + static_cast<int64_t>(k) * N;
            double* crow = C + static_cast<int64_t>(i) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
}

void gemm_nt(const double* A, const double* B, double* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            const double* arow = A + static_cast<int64_t>(i) * K;
            const double* brow = B + static_cast<int64_t>(j) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
            C[static_cast<int64_t>(i) * N + j] += acc;
        }
}

}  // namespace ref

void gemm_nn(const double* A, const double* B, double* C, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        double* crow = C + static_cast<int64_t>(i) * N;
        const double* arow = A + static_cast<int64_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const double a = arow[k];
            const double* brow = B + static_cast<int64_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

void gemm_tn(const double* A, const double* B, double* C, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        double* crow = C + static_cast<int64_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const double a = A[static_cast<int64_t>(k) * M + i];
            const double* brow = B + static_cast<int64_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

void gemm_nt(const double* A, const double* B, double* C, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        const double* arow = A + static_cast<int64_t>(i) * K;
        double* crow = C + static_cast<int64_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const double* brow = B + static_cast<int64_t>(j) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

void im2col3d(const double* x, int C, int D, int H, int W, int k, int stride, int pad,
              double* col, int outD, int outH, int outW) {
    const int64_t ov = static_cast<int64_t>(outD) * outH * outW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<int64_t>(c) * D * H * W;
        for (int kd = 0; kd < k; ++kd)
            for (int kh = 0; kh < k; ++kh)
                for (int kw = 0; kw < k; ++kw) {
                    double* crow =
                        col + ((((static_cast<int64_t>(c) * k + kd) * k + kh) * k + kw)) * ov;
                    int64_t o = 0;
                    for (int od = 0; od < outD; ++od) {
                        const int id = od * stride - pad + kd;
                        for (int oh = 0; oh < outH; ++oh) {
                            const int ih = oh * stride - pad + kh;
                            const bool plane_ok =
                                id >= 0 && id < D && ih >= 0 && ih < H;
                            for (int ow = 0; ow < outW; ++ow, ++o) {
                                const int iw = ow * stride - pad + kw;
                                crow[o] = (plane_ok && iw >= 0 && iw < W)
                                              ? xc[(static_cast<int64_t>(id) * H + ih) * W + iw]
                                              : 0.0;
                            }
                        }
                    }
                }
    }
}

void col2im3d(const double* col, int C, int D, int H, int W, int k, int stride, int pad,
              double* x, int outD, int outH, int outW) {
    const int64_t ov = static_cast<int64_t>(outD) * outH * outW;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        double* xc = x + static_cast<int64_t>(c) * D * H * W;
        for (int kd = 0; kd < k; ++kd)
            for (int kh = 0; kh < k; ++kh)
                for (int kw = 0; kw < k; ++kw) {
                    const double* crow =
                        col + ((((static_cast<int64_t>(c) * k + kd) * k + kh) * k + kw)) * ov;
                    int64_t o = 0;
                    for (int od = 0; od < outD; ++od) {
                        const int id = od * stride - pad + kd;
                        for (int oh = 0; oh < outH; ++oh) {
                            const int ih = oh * stride - pad + kh;
                            const bool plane_ok =
                                id >= 0 && id < D && ih >= 0 && ih < H;
                            for (int ow = 0; ow < outW; ++ow, ++o) {
                                const int iw = ow * stride - pad + kw;
                                if (plane_ok && iw >= 0 && iw < W)
                                    xc[(static_cast<int64_t>(id) * H + ih) * W + iw] += crow[o];
                            }
                        }
                    }
                }
    }
}

namespace {
constexpr int64_t kDotBlock = 4096;
}

double det_dot(const double* a, const double* b, int64_t n) {
    const int64_t nblocks = (n + kDotBlock - 1) / kDotBlock;
    double total = 0.0;
    std::vector<double> partial(static_cast<size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t blk = 0; blk < nblocks; ++blk) {
        const int64_t lo = blk * kDotBlock;
        const int64_t hi = std::min(n, lo + kDotBlock);
        double s = 0.0;
        for (int64_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[static_cast<size_t>(blk)] = s;
    }
    for (double s : partial) total += s;
    return total;
}

double det_sumsq(const double* a, int64_t n) { return det_dot(a, a, n); }

void axpy(double alpha, const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby(const double* x, double beta, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

}  // namespace physvox::kernels
