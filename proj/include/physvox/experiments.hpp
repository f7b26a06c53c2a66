#pragma once

#include <map>
#include <string>
#include <vector>

#include "physvox/physnet.hpp"
#include "physvox/trainer.hpp"

namespace physvox::experiments {

struct ExperimentConfig {
    std::string name;
    std::string out_dir;
    std::map<std::string, std::string> datasets;  // role -> dataset dir
    physnet::NetworkConfig net;
    trainer::TrainConfig train;
    std::vector<uint64_t> seeds{1, 2, 3};
    bool autogen = false;     // generate missing desk-scale datasets
    uint64_t data_seed = 7;
    int dense_e_count = 64;   // 1xN arm material count
    int location_arm_count = 6;
};

struct SeedOutcome {
    uint64_t seed = 0;
    double final_val_iou = 0;
    double best_val_iou = 0;
    int64_t convergence_iteration = -1;
};

struct ArmResult {
    std::string label;
    std::vector<SeedOutcome> seeds;
    double mean_final_iou = 0;
    int64_t phase_boundary = -1;  // cascaded arm: reconstruction/deformation split
    std::vector<std::vector<std::pair<int64_t, double>>> curves;  // per seed
};

struct ExperimentReport {
    std::string name;
    std::vector<ArmResult> arms;
};

std::vector<std::string> experiment_names();

// Trains every arm at the matched iteration budget over the configured seeds,
// writes report.json, per-seed curve CSVs and an SVG learning-curve plot.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace physvox::experiments
