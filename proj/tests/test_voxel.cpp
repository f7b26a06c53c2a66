#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "physvox/rng.hpp"
#include "physvox/voxel.hpp"

using namespace physvox;
using namespace physvox::voxel;

namespace {

VoxelGrid random_binary(int n, double fill, Rng& rng) {
    VoxelGrid g(n, 1.0, GridKind::binary);
    for (auto& v : g.values) v = rng.uniform() < fill ? 1.0 : 0.0;
    return g;
}

VoxelGrid box_grid(int n, int x0, int x1, int y0, int y1, int z0, int z1) {
    VoxelGrid g(n, 1.0, GridKind::binary);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) g.set(x, y, z, 1.0);
    return g;
}

}  // namespace

TEST_CASE("iou identity, disjoint and derived overlap") {
    VoxelGrid a(4, 1.0, GridKind::binary);
    a.set(1, 1, 1, 1.0);
    a.set(2, 2, 2, 1.0);
    CHECK(iou(a, a, 0.8) == 1.0);

    VoxelGrid b(4, 1.0, GridKind::binary);
    b.set(0, 0, 0, 1.0);
    b.set(3, 3, 3, 1.0);
    CHECK(iou(a, b, 0.8) == 0.0);

    // 2^3 grids: a = 0.9 at 4 cells, b = 1 at 4 cells, overlap 2 -> 2/6
    VoxelGrid pa(2, 1.0, GridKind::probabilistic);
    VoxelGrid pb(2, 1.0, GridKind::binary);
    pa.set(0, 0, 0, 0.9);
    pa.set(1, 0, 0, 0.9);
    pa.set(0, 1, 0, 0.9);
    pa.set(1, 1, 0, 0.9);
    pb.set(0, 0, 0, 1.0);
    pb.set(1, 0, 0, 1.0);
    pb.set(0, 0, 1, 1.0);
    pb.set(1, 0, 1, 1.0);
    CHECK(iou(pa, pb, 0.8) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("iou edge cases and errors") {
    VoxelGrid empty(4, 1.0, GridKind::binary);
    CHECK(iou(empty, empty, 0.8) == 1.0);  // empty/empty defined as agreement
    VoxelGrid other(8, 1.0, GridKind::binary);
    CHECK_THROWS_AS(iou(empty, other, 0.8), DimensionError);
    CHECK_THROWS_AS(iou(empty, empty, 0.0), ParameterError);
    CHECK_THROWS_AS(iou(empty, empty, 1.0), ParameterError);
}

TEST_CASE("iou matches the brute-force oracle on random 8^3 grids") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        VoxelGrid a(8, 1.0, GridKind::probabilistic);
        for (auto& v : a.values) v = rng.uniform();
        VoxelGrid b = random_binary(8, 0.4, rng);
        const auto fast = detail::iou_counts(a, b, 0.8);
        const auto ref = detail::ref::iou_counts(a, b, 0.8);
        REQUIRE(fast.inter == ref.inter);
        REQUIRE(fast.uni == ref.uni);
    }
}

TEST_CASE("iou is symmetric for binary inputs") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        VoxelGrid a = random_binary(8, 0.3, rng);
        VoxelGrid b = random_binary(8, 0.3, rng);
        CHECK(iou(a, b, 0.8) == doctest::Approx(iou(b, a, 0.8)));
    }
}

TEST_CASE("binarize uses strict >") {
    VoxelGrid g(2, 1.0, GridKind::probabilistic);
    g.set(0, 0, 0, 0.8);  // exactly p -> 0
    g.set(1, 0, 0, 0.79);
    g.set(0, 1, 0, 0.81);
    const VoxelGrid b = binarize(g, 0.8);
    CHECK(b.kind == GridKind::binary);
    CHECK(b.at(0, 0, 0) == 0.0);
    CHECK(b.at(1, 0, 0) == 0.0);
    CHECK(b.at(0, 1, 0) == 1.0);

    VoxelGrid zeros(2, 1.0, GridKind::probabilistic);
    const VoxelGrid bz = binarize(zeros, 0.8);
    CHECK(bz.occupied_count() == 0);
}

TEST_CASE("enumerate_rotations counts and uniqueness") {
    CHECK(enumerate_rotations(5).size() == 125);
    const auto one = enumerate_rotations(1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].euler[0] == 0.0);

    const auto two = enumerate_rotations(2);
    REQUIRE(two.size() == 8);
    std::set<std::array<double, 3>> seen;
    for (const auto& p : two) {
        for (double a : p.euler) CHECK((a == 0.0 || a == doctest::Approx(M_PI)));
        seen.insert(p.euler);
    }
    CHECK(seen.size() == 8);

    const auto five = enumerate_rotations(5);
    std::set<std::array<double, 3>> seen5;
    for (const auto& p : five) seen5.insert(p.euler);
    CHECK(seen5.size() == 125);
    CHECK_THROWS_AS(enumerate_rotations(0), ParameterError);
}

TEST_CASE("render_depth basics") {
    // fully occupied grid, identity pose: every pixel hits at depth 0
    VoxelGrid full(4, 0.5, GridKind::binary);
    for (auto& v : full.values) v = 1.0;
    const DepthImage img = render_depth(full, {});
    for (double d : img.depths) CHECK(d == 0.0);

    VoxelGrid empty(4, 0.5, GridKind::binary);
    const DepthImage none = render_depth(empty, {});
    for (double d : none.depths) CHECK(d == kNoHit);

    // single occupied cell at depth k along the view axis
    VoxelGrid one(4, 0.5, GridKind::binary);
    one.set(2, 1, 3, 1.0);
    const DepthImage single = render_depth(one, {});
    int hits = 0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            if (std::isfinite(single.at(x, y))) {
                ++hits;
                CHECK(x == 2);
                CHECK(y == 1);
                CHECK(single.at(x, y) == doctest::Approx(3 * 0.5));
            }
    CHECK(hits == 1);
}

TEST_CASE("depth_to_partial_grid round trip and subset property") {
    Rng rng(17);
    VoxelGrid cube = box_grid(8, 2, 5, 2, 5, 0, 3);
    const DepthImage img = render_depth(cube, {});
    const VoxelGrid shell = depth_to_partial_grid(img, 8);

    int64_t finite = 0;
    for (double d : img.depths) finite += std::isfinite(d) ? 1 : 0;
    CHECK(shell.occupied_count() == finite);

    // camera-facing face layer: all shell cells sit on the near face
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                if (shell.at(x, y, z) == 1.0) CHECK(z == 0);

    // all-sentinel image -> empty grid
    DepthImage blank;
    blank.width = blank.height = 8;
    blank.spacing = 1.0;
    blank.depths.assign(64, kNoHit);
    CHECK(depth_to_partial_grid(blank, 8).occupied_count() == 0);

    // partial view is a subset of the rotated solid, any pose
    for (int trial = 0; trial < 5; ++trial) {
        CameraPose pose{{rng.uniform(0, 2 * M_PI), rng.uniform(0, 2 * M_PI),
                         rng.uniform(0, 2 * M_PI)}};
        const VoxelGrid rot = rotate_grid(cube, pose);
        const VoxelGrid part = depth_to_partial_grid(render_depth(cube, pose), 8);
        for (int64_t i = 0; i < part.size(); ++i)
            if (part.values[static_cast<size_t>(i)] == 1.0)
                CHECK(rot.values[static_cast<size_t>(i)] == 1.0);
    }
}

TEST_CASE("pca_align canonicalizes an elongated box") {
    // axis-aligned box with distinct extents: identity rotation up to sign
    VoxelGrid box = box_grid(16, 2, 13, 5, 10, 0, 3);
    auto [aligned, a] = pca_align(box);
    CHECK_FALSE(a.degenerate);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(a.rotation[static_cast<size_t>(r) * 3 + c] - (r == c ? 1.0 : 0.0)) <
                  1e-9);

    // rotate 90 degrees about z and confirm the long axis is restored to x
    const VoxelGrid rot = rotate_grid(box, {{0, 0, M_PI / 2}});
    auto [realigned, a2] = pca_align(rot);
    int64_t diff = 0;
    for (int64_t i = 0; i < box.size(); ++i)
        diff += realigned.values[static_cast<size_t>(i)] != aligned.values[static_cast<size_t>(i)];
    // up to resampling jitter at the boundary
    CHECK(diff <= box.occupied_count() / 5);

    // idempotence: aligning an aligned grid changes <= 2% of occupied cells
    auto [again, a3] = pca_align(aligned);
    int64_t changed = 0;
    for (int64_t i = 0; i < box.size(); ++i)
        changed += again.values[static_cast<size_t>(i)] != aligned.values[static_cast<size_t>(i)];
    CHECK(static_cast<double>(changed) <= 0.02 * static_cast<double>(box.occupied_count()));
}

TEST_CASE("pca_align flags a perfect cube as degenerate") {
    VoxelGrid cube = box_grid(8, 2, 5, 2, 5, 2, 5);
    auto [aligned, a] = pca_align(cube);
    CHECK(a.degenerate);
    CHECK_THROWS_AS(pca_align(VoxelGrid(8, 1.0, GridKind::binary)), ParameterError);
}

TEST_CASE("alignment rotation is orthonormal with det +1") {
    Rng rng(23);
    VoxelGrid box = box_grid(16, 2, 13, 5, 10, 0, 4);
    for (int trial = 0; trial < 5; ++trial) {
        CameraPose pose{{rng.uniform(0, 2 * M_PI), rng.uniform(0, 2 * M_PI),
                         rng.uniform(0, 2 * M_PI)}};
        auto [aligned, a] = pca_align(rotate_grid(box, pose));
        const auto& r = a.rotation;
        double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
        CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = 0;
                for (int k = 0; k < 3; ++k)
                    dot += r[static_cast<size_t>(i) * 3 + k] * r[static_cast<size_t>(j) * 3 + k];
                CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
            }
    }
}

TEST_CASE("alignment round trip recovers the grid up to resampling") {
    VoxelGrid box = box_grid(16, 3, 12, 5, 10, 0, 4);
    auto [aligned, a] = pca_align(box);
    const VoxelGrid back = apply_alignment(aligned, invert_alignment(a));
    int64_t mismatch = 0;
    for (int64_t i = 0; i < box.size(); ++i)
        mismatch += back.values[static_cast<size_t>(i)] != box.values[static_cast<size_t>(i)];
    CHECK(static_cast<double>(mismatch) <= 0.02 * static_cast<double>(box.occupied_count()));
}

TEST_CASE("VXG1 round trip, both kinds") {
    namespace fs = std::filesystem;
    Rng rng(31);
    const auto dir = fs::temp_directory_path() / "physvox_test_vxg";
    fs::create_directories(dir);

    VoxelGrid b = random_binary(8, 0.5, rng);
    b.spacing = 0.125;
    save_grid(b, (dir / "b.vxg").string());
    const VoxelGrid b2 = load_grid((dir / "b.vxg").string());
    CHECK(b2.resolution == 8);
    CHECK(b2.kind == GridKind::binary);
    CHECK(b2.spacing == doctest::Approx(0.125));
    CHECK(b2.values == b.values);

    VoxelGrid p(4, 1.0, GridKind::probabilistic);
    for (auto& v : p.values) v = rng.uniform();
    save_grid(p, (dir / "p.vxg").string());
    const VoxelGrid p2 = load_grid((dir / "p.vxg").string());
    for (size_t i = 0; i < p.values.size(); ++i)
        CHECK(p2.values[i] == doctest::Approx(p.values[i]).epsilon(1e-6));

    std::ofstream bad((dir / "bad.vxg").string(), std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_WITH_AS(load_grid((dir / "bad.vxg").string()), doctest::Contains("bad magic"),
                         FormatError);
    fs::remove_all(dir);
}

TEST_CASE("depth image round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "physvox_test_dph";
    fs::create_directories(dir);
    VoxelGrid cube = box_grid(8, 2, 5, 2, 5, 0, 3);
    const DepthImage img = render_depth(cube, {{0.1, 0.2, 0.3}});
    save_depth(img, (dir / "d.dph").string());
    const DepthImage img2 = load_depth((dir / "d.dph").string());
    CHECK(img2.width == img.width);
    CHECK(img2.camera.euler[2] == doctest::Approx(0.3).epsilon(1e-6));
    int64_t finite1 = 0, finite2 = 0;
    for (double d : img.depths) finite1 += std::isfinite(d);
    for (double d : img2.depths) finite2 += std::isfinite(d);
    CHECK(finite1 == finite2);
    fs::remove_all(dir);
}
