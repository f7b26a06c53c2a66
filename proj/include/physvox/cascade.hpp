#pragma once

#include "physvox/trainer.hpp"

namespace physvox::cascade {

// Reconstruction network -> PCA alignment -> deformation network. The
// reconstruction slot takes any checkpoint with the reconstructor variant.
struct CascadePipeline {
    physnet::ModelWeights reconstructor;
    physnet::ModelWeights deformer;
    double threshold = 0.8;  // binarization between stages
};

// Reconstruction-only training (no condition input, deterministic latent,
// BCE + WGAN-GP adversarial term). Records must pair partial inputs with full
// undeformed targets — filter_force_zero() selects them from a partial set.
trainer::TrainResult train_reconstructor(const trainer::LoadedDataset& ds,
                                         physnet::NetworkConfig cfg, trainer::TrainConfig tc,
                                         const std::string& checkpoint_dir = "");

// The non-cascaded comparison arm: plain end-to-end training on partial
// inputs with deformed targets.
trainer::TrainResult train_direct_partial(const trainer::LoadedDataset& ds,
                                          physnet::NetworkConfig cfg, trainer::TrainConfig tc,
                                          const std::string& checkpoint_dir = "");

// Zero-force records of a partial dataset: their targets are the rotated
// undeformed solids, i.e. reconstruction ground truth.
trainer::LoadedDataset filter_force_zero(const trainer::LoadedDataset& ds, bool keep_zero);

// Deformer training set: inputs replaced by PCA-aligned binarized
// reconstructions, targets aligned by the same transform.
trainer::LoadedDataset make_aligned_dataset(const trainer::LoadedDataset& partial,
                                            const physnet::ModelWeights& recon, double p);

struct CascadeOut {
    voxel::VoxelGrid grid;            // probabilistic, back in the input frame
    voxel::RigidAlignment alignment;  // transform applied before the deformer
};

// reconstruct -> binarize -> align -> deform -> inverse-align. Degenerate PCA
// proceeds unaligned with the alignment flagged.
CascadeOut cascaded_predict(const voxel::VoxelGrid& input, const dataset::ConditionVector& y,
                            const CascadePipeline& pl, bool bypass_reconstructor = false);

// Pipeline bundle: directory with both checkpoints plus pipeline.json.
void save_pipeline(const CascadePipeline& pl, const std::string& dir);
CascadePipeline load_pipeline(const std::string& dir);

}  // namespace physvox::cascade
