#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "physvox/kernels.hpp"
#include "physvox/rng.hpp"

using namespace physvox;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("gemm variants match the serial reference") {
    Rng rng(42);
    const int M = 17, K = 33, N = 29;
    const auto A = random_vec(static_cast<size_t>(M) * K, rng);
    const auto B = random_vec(static_cast<size_t>(K) * N, rng);
    const auto At = random_vec(static_cast<size_t>(K) * M, rng);
    const auto Bt = random_vec(static_cast<size_t>(N) * K, rng);

    std::vector<double> c1(static_cast<size_t>(M) * N, 0.0), c2 = c1;
    kernels::ref::gemm_nn(A.data(), B.data(), c1.data(), M, K, N);
    kernels::gemm_nn(A.data(), B.data(), c2.data(), M, K, N);
    CHECK(max_abs_diff(c1, c2) < 1e-12);

    std::fill(c1.begin(), c1.end(), 0.0);
    std::fill(c2.begin(), c2.end(), 0.0);
    kernels::ref::gemm_tn(At.data(), B.data(), c1.data(), M, K, N);
    kernels::gemm_tn(At.data(), B.data(), c2.data(), M, K, N);
    CHECK(max_abs_diff(c1, c2) < 1e-12);

    std::fill(c1.begin(), c1.end(), 0.0);
    std::fill(c2.begin(), c2.end(), 0.0);
    kernels::ref::gemm_nt(A.data(), Bt.data(), c1.data(), M, K, N);
    kernels::gemm_nt(A.data(), Bt.data(), c2.data(), M, K, N);
    CHECK(max_abs_diff(c1, c2) < 1e-12);
}

TEST_CASE("gemm accumulates into C") {
    std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8}, C{1, 1, 1, 1};
    kernels::gemm_nn(A.data(), B.data(), C.data(), 2, 2, 2);
    CHECK(C[0] == doctest::Approx(1 + 1 * 5 + 2 * 7));
    CHECK(C[3] == doctest::Approx(1 + 3 * 6 + 4 * 8));
}

TEST_CASE("im2col/col2im are adjoint: <col, im2col(x)> == <col2im(col), x>") {
    Rng rng(7);
    const int C = 3, D = 6, H = 6, W = 6, k = 4, stride = 2, pad = 1;
    const int oD = (D + 2 * pad - k) / stride + 1;
    const int64_t ov = static_cast<int64_t>(oD) * oD * oD;
    const int64_t cols = static_cast<int64_t>(C) * k * k * k * ov;
    const auto x = random_vec(static_cast<size_t>(C) * D * H * W, rng);
    const auto a = random_vec(static_cast<size_t>(cols), rng);

    std::vector<double> col(static_cast<size_t>(cols), 0.0);
    kernels::im2col3d(x.data(), C, D, H, W, k, stride, pad, col.data(), oD, oD, oD);
    std::vector<double> back(x.size(), 0.0);
    kernels::col2im3d(a.data(), C, D, H, W, k, stride, pad, back.data(), oD, oD, oD);

    const double lhs = kernels::det_dot(a.data(), col.data(), cols);
    const double rhs = kernels::det_dot(back.data(), x.data(), static_cast<int64_t>(x.size()));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("det_dot equals sequential dot") {
    Rng rng(3);
    const auto a = random_vec(10001, rng);
    const auto b = random_vec(10001, rng);
    double expect = 0;
    for (size_t i = 0; i < a.size(); ++i) expect += a[i] * b[i];
    CHECK(kernels::det_dot(a.data(), b.data(), 10001) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(kernels::det_sumsq(a.data(), 10001) ==
          doctest::Approx(kernels::det_dot(a.data(), a.data(), 10001)));
}
