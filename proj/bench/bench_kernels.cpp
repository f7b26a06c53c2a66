// Serial reference vs OpenMP kernel comparison: GEMM, the conv lowering pair,
// the element-stiffness matvec and the IOU counts. Each line reports both
// times, the speedup and the max deviation between the two results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "physvox/elastic.hpp"
#include "physvox/kernels.hpp"
#include "physvox/rng.hpp"
#include "physvox/voxel.hpp"

using namespace physvox;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void bench_gemm(Rng& rng) {
    const int M = 256, K = 512, N = 256;
    const auto a = random_vec(static_cast<size_t>(M) * K, rng);
    const auto b = random_vec(static_cast<size_t>(K) * N, rng);
    std::vector<double> c1(static_cast<size_t>(M) * N), c2(c1.size());
    const double ts = time_best_of(3, [&] {
        std::fill(c1.begin(), c1.end(), 0.0);
        kernels::ref::gemm_nn(a.data(), b.data(), c1.data(), M, K, N);
    });
    const double tp = time_best_of(3, [&] {
        std::fill(c2.begin(), c2.end(), 0.0);
        kernels::gemm_nn(a.data(), b.data(), c2.data(), M, K, N);
    });
    const double gflop = 2.0 * M * K * N / 1e9;
    std::printf(
        "gemm_nn %dx%dx%d      serial %7.2f ms (%5.2f GF/s)  omp %7.2f ms (%5.2f GF/s)  x%.2f  dev %.2e\n",
        M, K, N, ts * 1e3, gflop / ts, tp * 1e3, gflop / tp, ts / tp, max_diff(c1, c2));
}

void bench_conv_lowering(Rng& rng) {
    const int C = 32, D = 16, k = 4, s = 2, p = 1;
    const int oD = (D + 2 * p - k) / s + 1;
    const int64_t ov = static_cast<int64_t>(oD) * oD * oD;
    const auto x = random_vec(static_cast<size_t>(C) * D * D * D, rng);
    std::vector<double> col(static_cast<size_t>(C) * k * k * k * ov);
    const double t = time_best_of(5, [&] {
        kernels::im2col3d(x.data(), C, D, D, D, k, s, p, col.data(), oD, oD, oD);
    });
    std::vector<double> back(x.size());
    const double t2 = time_best_of(5, [&] {
        std::fill(back.begin(), back.end(), 0.0);
        kernels::col2im3d(col.data(), C, D, D, D, k, s, p, back.data(), oD, oD, oD);
    });
    std::printf("im2col3d %d ch %d^3        %7.2f ms    col2im3d %7.2f ms\n", C, D, t * 1e3,
                t2 * 1e3);
}

void bench_fem_matvec(Rng& rng) {
    voxel::VoxelGrid g(32, 0.01, voxel::GridKind::binary);
    for (int z = 0; z < 16; ++z)
        for (int y = 4; y < 28; ++y)
            for (int x = 4; x < 28; ++x) g.set(x, y, z, 1.0);
    const auto mesh = elastic::build_hex_mesh(g, 1);
    const auto ke = elastic::element_stiffness({1.0, 0.3}, 0.01);
    const auto colors = elastic::detail::color_elements(mesh);
    const auto x = random_vec(static_cast<size_t>(mesh.dof_count()), rng);
    std::vector<double> y1(x.size()), y2(x.size());
    const double ts = time_best_of(5, [&] {
        elastic::detail::ref::stiffness_matvec(mesh, ke, x.data(), y1.data());
    });
    const double tp = time_best_of(5, [&] {
        elastic::detail::stiffness_matvec(mesh, ke, colors, x.data(), y2.data());
    });
    std::printf(
        "fem matvec %zu elems     serial %7.2f ms  coloured omp %7.2f ms  x%.2f  dev %.2e\n",
        mesh.elements.size(), ts * 1e3, tp * 1e3, ts / tp, max_diff(y1, y2));
}

void bench_iou(Rng& rng) {
    voxel::VoxelGrid a(64, 1.0, voxel::GridKind::probabilistic);
    voxel::VoxelGrid b(64, 1.0, voxel::GridKind::binary);
    for (auto& v : a.values) v = rng.uniform();
    for (auto& v : b.values) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    voxel::detail::IouCounts c1, c2;
    const double ts = time_best_of(5, [&] { c1 = voxel::detail::ref::iou_counts(a, b, 0.8); });
    const double tp = time_best_of(5, [&] { c2 = voxel::detail::iou_counts(a, b, 0.8); });
    std::printf("iou counts 64^3          serial %7.2f ms  omp %7.2f ms  x%.2f  match %s\n",
                ts * 1e3, tp * 1e3, ts / tp,
                (c1.inter == c2.inter && c1.uni == c2.uni) ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP\n");
#endif
    Rng rng(1234);
    bench_gemm(rng);
    bench_conv_lowering(rng);
    bench_fem_matvec(rng);
    bench_iou(rng);
    return 0;
}
