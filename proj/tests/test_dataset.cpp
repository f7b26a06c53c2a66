#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "physvox/dataset.hpp"
#include "physvox/voxel.hpp"

using namespace physvox;
using namespace physvox::dataset;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

GenerateConfig tiny_config() {
    GenerateConfig cfg;
    cfg.plan.e_count = 2;
    cfg.plan.nu_count = 2;
    cfg.plan.force_count = 2;
    cfg.plan.location_count = 1;
    cfg.resolution = 8;
    cfg.objects = {{"block", PrimitiveKind::block, ""}};
    cfg.seed = 12345;
    cfg.overwrite = true;
    return cfg;
}

}  // namespace

TEST_CASE("encode_condition endpoint and midpoint values") {
    const elastic::ForceSpec f{5.0, 3, {0, 0, -1}};
    const auto y = encode_condition({23.0, 0.25}, f, 10.0, EncodingMode::real, 10);
    CHECK(y.e_scaled() == doctest::Approx(1.0));
    CHECK(y.nu_scaled() == doctest::Approx(0.5));
    CHECK(y.force_scaled() == doctest::Approx(0.5));
    CHECK(y.values[3] == doctest::Approx(3.0 / 9.0));
    CHECK(y.length() == 4);

    const auto oh = encode_condition({23.0, 0.25}, f, 10.0, EncodingMode::one_hot, 10);
    CHECK(oh.length() == 13);
    double sum = 0;
    for (int i = 0; i < 10; ++i) sum += oh.values[static_cast<size_t>(3 + i)];
    CHECK(sum == 1.0);
    CHECK(oh.values[6] == 1.0);  // one-hot at position 3

    const auto lo = encode_condition({elastic::kEminGpa, 0.0}, {0.0, 0, {0, 0, -1}}, 10.0,
                                     EncodingMode::real, 10);
    CHECK(lo.e_scaled() == doctest::Approx(0.0));
    CHECK(lo.nu_scaled() == doctest::Approx(0.0));
    CHECK(lo.force_scaled() == doctest::Approx(0.0));
}

TEST_CASE("encode_condition rejects out-of-range values") {
    const elastic::ForceSpec f{1.0, 0, {0, 0, -1}};
    CHECK_THROWS_AS(encode_condition({24.0, 0.3}, f, 10.0, EncodingMode::real, 1),
                    ParameterError);
    CHECK_THROWS_AS(encode_condition({1e-6, 0.3}, f, 10.0, EncodingMode::real, 1),
                    ParameterError);
    CHECK_THROWS_AS(encode_condition({1.0, 0.3}, {20.0, 0, {0, 0, -1}}, 10.0, EncodingMode::real, 1),
                    ParameterError);
}

TEST_CASE("encode_condition is monotone and round-trips") {
    double prev = -1;
    for (double e : {1e-5, 1e-3, 0.1, 1.0, 10.0, 23.0}) {
        const auto y =
            encode_condition({e, 0.3}, {1.0, 0, {0, 0, -1}}, 2.0, EncodingMode::real, 4);
        CHECK(y.e_scaled() > prev);
        prev = y.e_scaled();
        const auto d = decode_condition(y, 2.0);
        CHECK(d.material.youngs_modulus_gpa == doctest::Approx(e).epsilon(1e-9));
        CHECK(d.material.poissons_ratio == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(d.force == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(d.location_index == 0);
    }
    // one-hot round trip of the location
    for (int loc = 0; loc < 4; ++loc) {
        const auto y = encode_condition({1.0, 0.2}, {0.5, loc, {0, 0, -1}}, 1.0,
                                        EncodingMode::one_hot, 4);
        CHECK(decode_condition(y, 1.0).location_index == loc);
    }
}

TEST_CASE("sample_materials plans") {
    SamplingPlan p400;
    p400.e_count = 400;
    p400.nu_count = 1;
    const auto m400 = sample_materials(p400);
    REQUIRE(m400.size() == 400);
    for (const auto& m : m400) CHECK(m.poissons_ratio == doctest::Approx(0.3));
    CHECK(m400.front().youngs_modulus_gpa == doctest::Approx(elastic::kEminGpa));
    CHECK(m400.back().youngs_modulus_gpa == doctest::Approx(elastic::kEmaxGpa));

    SamplingPlan p20;
    p20.e_count = 20;
    p20.nu_count = 20;
    CHECK(sample_materials(p20).size() == 400);

    SamplingPlan p1;
    p1.e_count = 1;
    p1.nu_count = 1;
    const auto m1 = sample_materials(p1);
    REQUIRE(m1.size() == 1);
    CHECK(m1[0].youngs_modulus_gpa ==
          doctest::Approx(std::sqrt(elastic::kEminGpa * elastic::kEmaxGpa)));

    // log-uniform spacing: ratios of consecutive E samples are constant
    SamplingPlan p5;
    p5.e_count = 5;
    p5.nu_count = 1;
    const auto m5 = sample_materials(p5);
    const double r0 = m5[1].youngs_modulus_gpa / m5[0].youngs_modulus_gpa;
    for (size_t i = 2; i < 5; ++i)
        CHECK(m5[i].youngs_modulus_gpa / m5[i - 1].youngs_modulus_gpa ==
              doctest::Approx(r0).epsilon(1e-9));

    // k-1 midpoints sit strictly between the k grid samples: interior,
    // disjoint evaluation materials
    SamplingPlan pmid = p5;
    pmid.e_count = 4;
    pmid.midpoint_offset = true;
    const auto mmid = sample_materials(pmid);
    std::set<double> grid_es;
    for (const auto& m : m5) grid_es.insert(m.youngs_modulus_gpa);
    for (const auto& m : mmid) {
        CHECK(m.youngs_modulus_gpa > elastic::kEminGpa);
        CHECK(m.youngs_modulus_gpa < elastic::kEmaxGpa);
        CHECK(grid_es.count(m.youngs_modulus_gpa) == 0);
    }
}

TEST_CASE("build_primitive shapes") {
    // block, unit scale, 16^3: central 8x8x8, grounded
    const auto block = build_primitive(PrimitiveKind::block, {1, 1, 1}, 16, 1.0);
    CHECK(block.occupied_count() == 8 * 8 * 8);
    for (int z = 0; z < 16; ++z)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const bool expect = x >= 4 && x <= 11 && y >= 4 && y <= 11 && z <= 7;
                CHECK(block.at(x, y, z) == (expect ? 1.0 : 0.0));
            }

    // beam x-stretch 2.0 doubles the x extent, leaves y/z unchanged
    const auto beam1 = build_primitive(PrimitiveKind::beam, {1, 1, 1}, 16, 1.0);
    const auto beam2 = build_primitive(PrimitiveKind::beam, {2, 1, 1}, 16, 1.0);
    auto extent = [](const voxel::VoxelGrid& g, int axis) {
        int lo = g.resolution, hi = -1;
        for (int z = 0; z < g.resolution; ++z)
            for (int y = 0; y < g.resolution; ++y)
                for (int x = 0; x < g.resolution; ++x)
                    if (g.at(x, y, z) == 1.0) {
                        const int v = axis == 0 ? x : (axis == 1 ? y : z);
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
        return hi - lo + 1;
    };
    CHECK(extent(beam2, 0) == 2 * extent(beam1, 0));
    CHECK(extent(beam2, 1) == extent(beam1, 1));
    CHECK(extent(beam2, 2) == extent(beam1, 2));

    // cylinder: circular cross-section within one cell of the target radius
    const auto cyl = build_primitive(PrimitiveKind::cylinder, {1, 1, 1}, 16, 1.0);
    const double r = 0.2 * 16, c = 7.5;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c));
            if (cyl.at(x, y, 0) == 1.0) CHECK(d <= r + 1.0);
            if (d < r - 1.0) CHECK(cyl.at(x, y, 0) == 1.0);
        }

    // bridge touches the ground and has a deck wider than the pillars
    const auto bridge = build_primitive(PrimitiveKind::bridge, {1, 1, 1}, 16, 1.0);
    int64_t ground = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) ground += bridge.at(x, y, 0) == 1.0;
    CHECK(ground > 0);

    CHECK_THROWS_AS(build_primitive(PrimitiveKind::beam, {4, 1, 1}, 16, 1.0), ParameterError);
    CHECK_THROWS_AS(build_primitive(PrimitiveKind::custom, {1, 1, 1}, 16, 1.0), ParameterError);
}

TEST_CASE("record serialization round trip") {
    SampleRecord r;
    r.input_kind = InputKind::partial;
    r.input_grid = voxel::VoxelGrid(4, 0.25, voxel::GridKind::binary);
    r.input_grid.set(1, 2, 3, 1.0);
    r.target_grid = voxel::VoxelGrid(4, 0.25, voxel::GridKind::binary);
    r.target_grid.set(2, 2, 0, 1.0);
    r.condition = encode_condition({1.0, 0.3}, {2.0, 1, {0, 0, -1}}, 4.0, EncodingMode::one_hot, 3);
    r.meta = {"obj7", 1.0, 0.3, 2.0, 4.0, 1, {1, 1.25, 0.75}, {0.1, 0.2, 0.3}, 42};

    std::stringstream ss;
    write_record(r, ss);
    const SampleRecord r2 = read_record(ss);
    CHECK(r2.input_kind == InputKind::partial);
    CHECK(r2.input_grid.values == r.input_grid.values);
    CHECK(r2.target_grid.values == r.target_grid.values);
    CHECK(r2.condition.values.size() == r.condition.values.size());
    CHECK(r2.condition.mode == EncodingMode::one_hot);
    CHECK(r2.condition.location_count == 3);
    CHECK(r2.meta.object_id == "obj7");
    CHECK(r2.meta.e_gpa == doctest::Approx(1.0));
    CHECK(r2.meta.scale[1] == doctest::Approx(1.25));
    CHECK(r2.meta.seed == 42);
}

TEST_CASE("generate_dataset writes records, manifest and splits") {
    const auto dir = fs::temp_directory_path() / "physvox_test_gen";
    fs::remove_all(dir);
    const GenerateConfig cfg = tiny_config();
    const auto man = generate_dataset(cfg, dir.string());

    // 1 object x 1 scale x (2x2 materials) x 2 forces x 1 location
    CHECK(man.record_count == 8);
    CHECK(man.records.size() == 8);
    CHECK(man.skip_count == 0);

    const auto loaded = load_manifest(dir.string());
    CHECK(loaded.record_count == 8);
    CHECK(loaded.resolution == 8);
    CHECK(loaded.plan.e_count == 2);

    // splits are disjoint and exhaustive
    std::set<std::string> seen_splits;
    int total = 0;
    for (const auto& split : {"train", "validation", "test"}) {
        const auto idx = loaded.split_indices(split);
        total += static_cast<int>(idx.size());
    }
    CHECK(total == 8);
    CHECK(loaded.split_indices("train").size() >= 6);

    // offsets strictly increase
    for (size_t i = 1; i < loaded.records.size(); ++i)
        CHECK(loaded.records[i].offset > loaded.records[i - 1].offset);

    // zero-force records have target == input; all targets grounded
    for (int i = 0; i < 8; ++i) {
        const auto rec = load_record(loaded, i);
        CHECK(rec.target_grid.occupied_count() > 0);
        int64_t ground = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) ground += rec.target_grid.at(x, y, 0) == 1.0;
        CHECK(ground > 0);
        if (rec.meta.force == 0.0) {
            CHECK(rec.input_grid.values == rec.target_grid.values);
            CHECK(voxel::iou(rec.input_grid, rec.target_grid, 0.5) == 1.0);
        } else {
            CHECK(rec.condition.force_scaled() == doctest::Approx(1.0));
        }
    }

    // refuses to overwrite without the flag
    GenerateConfig no_force = cfg;
    no_force.overwrite = false;
    CHECK_THROWS_AS(generate_dataset(no_force, dir.string()), GenerationError);
    fs::remove_all(dir);
}

TEST_CASE("generation is byte-identical across runs with one seed") {
    const auto dir1 = fs::temp_directory_path() / "physvox_test_det1";
    const auto dir2 = fs::temp_directory_path() / "physvox_test_det2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    const GenerateConfig cfg = tiny_config();
    generate_dataset(cfg, dir1.string());
    generate_dataset(cfg, dir2.string());

    CHECK(slurp(dir1 / "manifest.json") == slurp(dir2 / "manifest.json"));
    const auto man = load_manifest(dir1.string());
    for (const auto& e : man.records) CHECK(slurp(dir1 / e.file) == slurp(dir2 / e.file));
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("partial mode multiplies records by the rotation count") {
    const auto dir = fs::temp_directory_path() / "physvox_test_partial";
    fs::remove_all(dir);
    GenerateConfig cfg = tiny_config();
    cfg.plan.e_count = 1;
    cfg.plan.nu_count = 1;
    cfg.plan.force_count = 1;
    cfg.plan.rotations_per_axis = 2;
    cfg.mode = "partial";
    const auto man = generate_dataset(cfg, dir.string());
    CHECK(man.record_count == 8);  // 1 combo x 2^3 poses
    const auto loaded = load_manifest(dir.string());
    const auto rec = load_record(loaded, 0);
    CHECK(rec.input_kind == InputKind::partial);
    CHECK(rec.input_grid.occupied_count() > 0);
    CHECK(rec.input_grid.occupied_count() < rec.target_grid.occupied_count());
    fs::remove_all(dir);
}

TEST_CASE("sample_scales covers the documented range") {
    SamplingPlan p;
    p.scale_samples_per_axis = 3;
    const auto scales = sample_scales(p);
    CHECK(scales.size() == 27);
    CHECK(scales.front()[0] == doctest::Approx(0.5));
    CHECK(scales.back()[2] == doctest::Approx(1.5));
    SamplingPlan one;
    CHECK(sample_scales(one).size() == 1);
    CHECK(sample_scales(one)[0][0] == 1.0);
}
