#include "physvox/cascade.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace physvox::cascade {

trainer::TrainResult train_reconstructor(const trainer::LoadedDataset& ds,
                                         physnet::NetworkConfig cfg, trainer::TrainConfig tc,
                                         const std::string& checkpoint_dir) {
    tc.model_variant = "reconstructor";
    return trainer::train(ds, cfg, tc, checkpoint_dir);
}

trainer::TrainResult train_direct_partial(const trainer::LoadedDataset& ds,
                                          physnet::NetworkConfig cfg, trainer::TrainConfig tc,
                                          const std::string& checkpoint_dir) {
    tc.model_variant = "physnet";
    return trainer::train(ds, cfg, tc, checkpoint_dir);
}

namespace {

trainer::LoadedDataset rebuild_splits(const trainer::LoadedDataset& src,
                                      const std::vector<int>& keep) {
    trainer::LoadedDataset out;
    out.resolution = src.resolution;
    out.spacing = src.spacing;
    out.encoding = src.encoding;
    out.location_count = src.location_count;
    out.f_max = src.f_max;
    std::vector<int> remap(src.records.size(), -1);
    for (int new_i = 0; new_i < static_cast<int>(keep.size()); ++new_i) {
        remap[static_cast<size_t>(keep[static_cast<size_t>(new_i)])] = new_i;
        out.records.push_back(src.records[static_cast<size_t>(keep[static_cast<size_t>(new_i)])]);
    }
    auto remap_set = [&](const std::vector<int>& idx, std::vector<int>& dst) {
        for (int i : idx)
            if (remap[static_cast<size_t>(i)] >= 0) dst.push_back(remap[static_cast<size_t>(i)]);
    };
    remap_set(src.train_idx, out.train_idx);
    remap_set(src.val_idx, out.val_idx);
    remap_set(src.test_idx, out.test_idx);
    return out;
}

}  // namespace

trainer::LoadedDataset filter_force_zero(const trainer::LoadedDataset& ds, bool keep_zero) {
    std::vector<int> keep;
    for (int i = 0; i < static_cast<int>(ds.records.size()); ++i) {
        const bool zero = ds.records[static_cast<size_t>(i)].meta.force == 0.0;
        if (zero == keep_zero) keep.push_back(i);
    }
    return rebuild_splits(ds, keep);
}

trainer::LoadedDataset make_aligned_dataset(const trainer::LoadedDataset& partial,
                                            const physnet::ModelWeights& recon, double p) {
    trainer::LoadedDataset out = partial;
    int degenerate = 0;
    for (auto& rec : out.records) {
        const voxel::VoxelGrid pred =
            physnet::predict(recon, rec.input_grid, dataset::ConditionVector{}, true);
        const voxel::VoxelGrid full = voxel::binarize(pred, p);
        voxel::RigidAlignment align;
        voxel::VoxelGrid aligned = full;
        try {
            auto [ag, a] = voxel::pca_align(full);
            aligned = std::move(ag);
            align = a;
        } catch (const std::exception&) {
            align.degenerate = true;
            ++degenerate;
        }
        rec.input_grid = aligned;
        rec.target_grid = voxel::apply_alignment(rec.target_grid, align);
        rec.input_kind = dataset::InputKind::reconstructed;
    }
    if (degenerate > 0)
        std::cerr << "warning: " << degenerate
                  << " reconstructions too sparse for PCA; kept unaligned\n";
    return out;
}

CascadeOut cascaded_predict(const voxel::VoxelGrid& input, const dataset::ConditionVector& y,
                            const CascadePipeline& pl, bool bypass_reconstructor) {
    CascadeOut out;
    voxel::VoxelGrid full = input;
    if (!bypass_reconstructor) {
        const voxel::VoxelGrid pred =
            physnet::predict(pl.reconstructor, input, dataset::ConditionVector{}, true);
        full = voxel::binarize(pred, pl.threshold);
    }
    voxel::VoxelGrid aligned = full;
    try {
        auto [ag, a] = voxel::pca_align(full);
        aligned = std::move(ag);
        out.alignment = a;
    } catch (const std::exception&) {
        out.alignment.degenerate = true;
    }
    const voxel::VoxelGrid deformed = physnet::predict(pl.deformer, aligned, y, true);
    out.grid = voxel::apply_alignment(deformed, voxel::invert_alignment(out.alignment));
    return out;
}

void save_pipeline(const CascadePipeline& pl, const std::string& dir) {
    fs::create_directories(dir);
    physnet::save_checkpoint(pl.reconstructor, (fs::path(dir) / "reconstructor.pvw").string());
    physnet::save_checkpoint(pl.deformer, (fs::path(dir) / "deformer.pvw").string());
    ordered_json j;
    j["reconstructor"] = "reconstructor.pvw";
    j["deformer"] = "deformer.pvw";
    j["threshold"] = pl.threshold;
    std::ofstream os(fs::path(dir) / "pipeline.json");
    os << j.dump(2) << "\n";
}

CascadePipeline load_pipeline(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "pipeline.json");
    if (!is) throw FormatError("cannot open pipeline.json in " + dir);
    ordered_json j;
    is >> j;
    CascadePipeline pl;
    pl.reconstructor =
        physnet::load_checkpoint((fs::path(dir) / j.at("reconstructor").get<std::string>()).string());
    pl.deformer =
        physnet::load_checkpoint((fs::path(dir) / j.at("deformer").get<std::string>()).string());
    pl.threshold = j.at("threshold").get<double>();
    return pl;
}

}  // namespace physvox::cascade
