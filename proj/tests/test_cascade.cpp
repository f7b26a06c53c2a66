#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "physvox/cascade.hpp"
#include "physvox/dataset.hpp"

using namespace physvox;
using namespace physvox::cascade;

namespace fs = std::filesystem;

namespace {

const trainer::LoadedDataset& partial_dataset() {
    static trainer::LoadedDataset ds = [] {
        const auto dir = fs::temp_directory_path() / "physvox_cascade_ds";
        fs::remove_all(dir);
        dataset::GenerateConfig cfg;
        cfg.plan.e_count = 2;
        cfg.plan.nu_count = 1;
        cfg.plan.force_count = 2;   // includes zero force
        cfg.plan.rotations_per_axis = 2;
        cfg.mode = "partial";
        cfg.resolution = 8;
        cfg.objects = {{"block", dataset::PrimitiveKind::block, ""}};
        cfg.seed = 321;
        const auto man = dataset::generate_dataset(cfg, dir.string());
        return trainer::load_all(man);
    }();
    return ds;
}

physnet::NetworkConfig tiny_net() {
    physnet::NetworkConfig net;
    net.grid_resolution = 8;
    net.base_channels = 2;
    net.latent_dim = 8;
    net.flatten_dim = 8;
    net.critic_dense_dim = 8;
    return net;
}

trainer::TrainConfig fast_tc(int64_t iters) {
    trainer::TrainConfig tc;
    tc.max_iterations = iters;
    tc.batch_size = 4;
    tc.critic_steps = 2;
    tc.eval_interval = 2;
    tc.learning_rate = 1e-3;
    tc.seed = 5;
    return tc;
}

}  // namespace

TEST_CASE("force filter splits reconstruction pairs from deformation pairs") {
    const auto& ds = partial_dataset();
    const auto zero = filter_force_zero(ds, true);
    const auto nonzero = filter_force_zero(ds, false);
    CHECK(zero.records.size() + nonzero.records.size() == ds.records.size());
    CHECK(zero.records.size() == ds.records.size() / 2);  // force_count = 2 with 0 included
    for (const auto& r : zero.records) CHECK(r.meta.force == 0.0);
    for (const auto& r : nonzero.records) CHECK(r.meta.force > 0.0);
    // zero-force targets are the rotated full solids: strictly more occupancy
    // than the partial shells
    for (const auto& r : zero.records)
        CHECK(r.target_grid.occupied_count() > r.input_grid.occupied_count());
}

TEST_CASE("reconstructor trains on partial inputs without a condition") {
    const auto& ds = partial_dataset();
    const auto recon_ds = filter_force_zero(ds, true);
    const auto res = train_reconstructor(recon_ds, tiny_net(), fast_tc(2));
    CHECK(res.final_weights.variant == physnet::Variant::reconstructor);
    CHECK(res.final_weights.config.condition_length == 0);
    REQUIRE(!res.log.rows.empty());

    // defined probabilistic output even for an empty input grid
    voxel::VoxelGrid empty(8, ds.spacing, voxel::GridKind::binary);
    const auto out = physnet::predict(res.best_weights, empty, {}, true);
    CHECK(out.kind == voxel::GridKind::probabilistic);
    for (double v : out.values) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("aligned dataset keeps shapes consistent and marks inputs") {
    const auto& ds = partial_dataset();
    const auto recon_ds = filter_force_zero(ds, true);
    const auto recon = train_reconstructor(recon_ds, tiny_net(), fast_tc(1));
    const auto aligned = make_aligned_dataset(ds, recon.best_weights, 0.5);
    REQUIRE(aligned.records.size() == ds.records.size());
    for (const auto& r : aligned.records) {
        CHECK(r.input_kind == dataset::InputKind::reconstructed);
        CHECK(r.input_grid.resolution == 8);
        CHECK(r.input_grid.kind == voxel::GridKind::binary);
    }
}

TEST_CASE("cascaded_predict output matches the deformer contract") {
    const auto& ds = partial_dataset();
    const auto recon_ds = filter_force_zero(ds, true);
    const auto recon = train_reconstructor(recon_ds, tiny_net(), fast_tc(1));
    const auto deform = trainer::train(ds, tiny_net(), fast_tc(1));
    const CascadePipeline pl{recon.best_weights, deform.best_weights, 0.8};

    const auto& rec = ds.records.front();
    const auto out1 = cascaded_predict(rec.input_grid, rec.condition, pl);
    const auto out2 = cascaded_predict(rec.input_grid, rec.condition, pl);
    CHECK(out1.grid.resolution == 8);
    CHECK(out1.grid.kind == voxel::GridKind::probabilistic);
    CHECK(out1.grid.values == out2.grid.values);  // deterministic mode is bit-stable
}

TEST_CASE("bypass on a degenerate-PCA shape reduces exactly to predict") {
    const auto& ds = partial_dataset();
    const auto deform = trainer::train(ds, tiny_net(), fast_tc(1));
    CascadePipeline pl;
    pl.deformer = deform.best_weights;
    pl.reconstructor = deform.best_weights;  // unused under bypass on
    pl.threshold = 0.8;

    // a centred cube has isotropic covariance and a zero-shift centroid, so
    // the alignment is the exact identity and the cascade reduces to predict
    voxel::VoxelGrid cube(8, ds.spacing, voxel::GridKind::binary);
    for (int z = 2; z < 6; ++z)
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x) cube.set(x, y, z, 1.0);
    auto [aligned, a] = voxel::pca_align(cube);
    REQUIRE(a.degenerate);
    REQUIRE(aligned.values == cube.values);

    const auto& y = ds.records.front().condition;
    const auto direct = physnet::predict(pl.deformer, cube, y, true);
    const auto casc = cascaded_predict(cube, y, pl, true);
    CHECK(casc.grid.values == direct.values);
}

TEST_CASE("pipeline bundle round trip") {
    const auto dir = fs::temp_directory_path() / "physvox_cascade_bundle";
    fs::remove_all(dir);
    const auto& ds = partial_dataset();
    const auto recon_ds = filter_force_zero(ds, true);
    const auto recon = train_reconstructor(recon_ds, tiny_net(), fast_tc(1));
    const auto deform = trainer::train(ds, tiny_net(), fast_tc(1));
    const CascadePipeline pl{recon.best_weights, deform.best_weights, 0.75};
    save_pipeline(pl, dir.string());
    const CascadePipeline pl2 = load_pipeline(dir.string());
    CHECK(pl2.threshold == doctest::Approx(0.75));
    CHECK(pl2.reconstructor.variant == physnet::Variant::reconstructor);
    for (const auto& [name, t] : pl.deformer.tensors)
        CHECK(pl2.deformer.tensors.at(name).data == t.data);

    const auto& rec = ds.records.front();
    const auto o1 = cascaded_predict(rec.input_grid, rec.condition, pl);
    const auto o2 = cascaded_predict(rec.input_grid, rec.condition, pl2);
    CHECK(o1.grid.values == o2.grid.values);
    fs::remove_all(dir);
}
