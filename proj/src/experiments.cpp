#include "physvox/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "physvox/cascade.hpp"
#include "physvox/plot.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace physvox::experiments {

std::vector<std::string> experiment_names() {
    return {"encoding_comparison", "sampling_1xN_vs_KxK", "location_encoding",
            "partial_vs_cascaded"};
}

namespace {

std::string ensure_dataset(const ExperimentConfig& cfg, const std::string& role,
                           const dataset::GenerateConfig& gen) {
    auto it = cfg.datasets.find(role);
    if (it != cfg.datasets.end()) return it->second;
    const std::string dir = (fs::path(cfg.out_dir) / "data" / role).string();
    if (fs::exists(fs::path(dir) / "manifest.json")) return dir;
    if (!cfg.autogen)
        throw ConfigError("experiment: missing dataset for role '" + role +
                          "'; pass --autogen or generate it with `physvox generate --mode " +
                          gen.mode + " --out " + dir + "`");
    std::cerr << "generating " << role << " dataset under " << dir << "\n";
    dataset::generate_dataset(gen, dir);
    return dir;
}

dataset::GenerateConfig base_gen(const ExperimentConfig& cfg) {
    dataset::GenerateConfig g;
    g.resolution = cfg.net.grid_resolution;
    g.seed = cfg.data_seed;
    g.objects = {{"bridge", dataset::PrimitiveKind::bridge, ""}};
    g.overwrite = false;
    return g;
}

std::vector<std::pair<int64_t, double>> curve_of(const trainer::MetricLog& log,
                                                 int64_t offset = 0) {
    std::vector<std::pair<int64_t, double>> c;
    for (const auto& r : log.rows) c.emplace_back(r.iteration + offset, r.val_iou);
    return c;
}

ArmResult train_arm(const std::string& label, const std::string& variant,
                    const trainer::LoadedDataset& ds, const ExperimentConfig& cfg) {
    ArmResult arm;
    arm.label = label;
    double total = 0;
    for (uint64_t seed : cfg.seeds) {
        trainer::TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.model_variant = variant;
        tc.early_stop_iou = -1.0;  // matched budget: no early stop
        const auto res = trainer::train(ds, cfg.net, tc);
        SeedOutcome so;
        so.seed = seed;
        so.final_val_iou = res.log.rows.empty() ? 0.0 : res.log.rows.back().val_iou;
        so.best_val_iou = res.best_val_iou;
        so.convergence_iteration = res.log.convergence_iteration;
        arm.seeds.push_back(so);
        arm.curves.push_back(curve_of(res.log));
        total += so.final_val_iou;
        std::cerr << label << " seed " << seed << ": final IOU " << so.final_val_iou << "\n";
    }
    arm.mean_final_iou = total / static_cast<double>(arm.seeds.size());
    return arm;
}

ArmResult train_cascaded_arm(const trainer::LoadedDataset& partial, const ExperimentConfig& cfg) {
    ArmResult arm;
    arm.label = "cascaded";
    const int64_t recon_iters = cfg.train.max_iterations / 2;
    const int64_t deform_iters = cfg.train.max_iterations - recon_iters;
    arm.phase_boundary = recon_iters;
    const trainer::LoadedDataset recon_ds = cascade::filter_force_zero(partial, true);
    double total = 0;
    for (uint64_t seed : cfg.seeds) {
        trainer::TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.early_stop_iou = -1.0;

        trainer::TrainConfig tc_r = tc;
        tc_r.max_iterations = recon_iters;
        const auto recon = cascade::train_reconstructor(recon_ds, cfg.net, tc_r);

        const trainer::LoadedDataset aligned =
            cascade::make_aligned_dataset(partial, recon.best_weights, tc.eval_threshold);
        trainer::TrainConfig tc_d = tc;
        tc_d.max_iterations = deform_iters;
        tc_d.model_variant = "physnet";
        const auto deform = trainer::train(aligned, cfg.net, tc_d);

        cascade::CascadePipeline pl{recon.best_weights, deform.best_weights, tc.eval_threshold};
        const std::vector<int>& vidx =
            partial.val_idx.empty() ? partial.train_idx : partial.val_idx;
        double iou_sum = 0;
        for (int i : vidx) {
            const auto& rec = partial.records[static_cast<size_t>(i)];
            const auto out = cascade::cascaded_predict(rec.input_grid, rec.condition, pl);
            iou_sum += voxel::iou(out.grid, rec.target_grid, tc.eval_threshold);
        }
        SeedOutcome so;
        so.seed = seed;
        so.final_val_iou = iou_sum / static_cast<double>(vidx.size());
        so.best_val_iou = so.final_val_iou;
        so.convergence_iteration = deform.log.convergence_iteration < 0
                                       ? -1
                                       : deform.log.convergence_iteration + recon_iters;
        arm.seeds.push_back(so);
        auto curve = curve_of(recon.log);
        const auto dcurve = curve_of(deform.log, recon_iters);
        curve.insert(curve.end(), dcurve.begin(), dcurve.end());
        arm.curves.push_back(std::move(curve));
        total += so.final_val_iou;
        std::cerr << "cascaded seed " << seed << ": final IOU " << so.final_val_iou << "\n";
    }
    arm.mean_final_iou = total / static_cast<double>(arm.seeds.size());
    return arm;
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentReport& rep) {
    fs::create_directories(cfg.out_dir);
    ordered_json j;
    j["experiment"] = rep.name;
    j["iterations"] = cfg.train.max_iterations;
    ordered_json arms = ordered_json::array();
    std::vector<plot::Series> series;
    double boundary = -1;
    for (const auto& arm : rep.arms) {
        ordered_json a;
        a["label"] = arm.label;
        a["mean_final_iou"] = arm.mean_final_iou;
        if (arm.phase_boundary >= 0) {
            a["phase_boundary_iteration"] = arm.phase_boundary;
            boundary = static_cast<double>(arm.phase_boundary);
        }
        ordered_json seeds = ordered_json::array();
        for (const auto& s : arm.seeds) {
            ordered_json sj;
            sj["seed"] = s.seed;
            sj["final_val_iou"] = s.final_val_iou;
            sj["best_val_iou"] = s.best_val_iou;
            sj["convergence_iteration"] = s.convergence_iteration;
            seeds.push_back(sj);
        }
        a["seeds"] = seeds;
        arms.push_back(a);

        for (size_t k = 0; k < arm.curves.size(); ++k) {
            std::ofstream cs(fs::path(cfg.out_dir) /
                             ("curve_" + arm.label + "_seed" +
                              std::to_string(cfg.seeds[k]) + ".csv"));
            cs << "iteration,val_iou\n";
            cs.precision(17);
            for (const auto& [it, v] : arm.curves[k]) cs << it << ',' << v << "\n";
        }
        // mean curve across seeds for the plot
        plot::Series s;
        s.label = arm.label;
        if (!arm.curves.empty()) {
            const size_t rows = arm.curves.front().size();
            for (size_t r = 0; r < rows; ++r) {
                double acc = 0;
                size_t cnt = 0;
                for (const auto& c : arm.curves)
                    if (r < c.size()) {
                        acc += c[r].second;
                        ++cnt;
                    }
                if (cnt) {
                    s.x.push_back(static_cast<double>(arm.curves.front()[r].first));
                    s.y.push_back(acc / static_cast<double>(cnt));
                }
            }
        }
        series.push_back(std::move(s));
    }
    j["arms"] = arms;
    std::ofstream os(fs::path(cfg.out_dir) / "report.json");
    os << j.dump(2) << "\n";
    plot::write_svg((fs::path(cfg.out_dir) / "curves.svg").string(), rep.name, "iteration",
                    "validation IOU", series, boundary);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    ExperimentReport rep;
    rep.name = cfg.name;
    fs::create_directories(cfg.out_dir);

    if (cfg.name == "encoding_comparison") {
        dataset::GenerateConfig g = base_gen(cfg);
        g.plan.e_count = cfg.dense_e_count;
        g.plan.nu_count = 1;
        g.plan.force_count = 2;
        const std::string dir = ensure_dataset(cfg, "main", g);
        const auto ds = trainer::load_all(dataset::load_manifest(dir));
        rep.arms.push_back(train_arm("physnet", "physnet", ds, cfg));
        rep.arms.push_back(train_arm("icgan_baseline", "icgan", ds, cfg));
    } else if (cfg.name == "sampling_1xN_vs_KxK") {
        const int k = std::max(2, static_cast<int>(std::lround(std::sqrt(cfg.dense_e_count))));
        dataset::GenerateConfig g1 = base_gen(cfg);
        g1.plan.e_count = cfg.dense_e_count;
        g1.plan.nu_count = 1;
        dataset::GenerateConfig g2 = base_gen(cfg);
        g2.plan.e_count = k;
        g2.plan.nu_count = k;
        const std::string d1 = ensure_dataset(cfg, "one_x_n", g1);
        const std::string d2 = ensure_dataset(cfg, "k_x_k", g2);
        const auto ds1 = trainer::load_all(dataset::load_manifest(d1));
        const auto ds2 = trainer::load_all(dataset::load_manifest(d2));
        rep.arms.push_back(train_arm("physnet_1x" + std::to_string(cfg.dense_e_count), "physnet",
                                     ds1, cfg));
        rep.arms.push_back(train_arm(
            "physnet_" + std::to_string(k) + "x" + std::to_string(k), "physnet", ds2, cfg));
    } else if (cfg.name == "location_encoding") {
        dataset::GenerateConfig gr = base_gen(cfg);
        gr.plan.e_count = 2;
        gr.plan.nu_count = 2;
        gr.plan.location_count = cfg.location_arm_count;
        gr.encoding = dataset::EncodingMode::real;
        dataset::GenerateConfig go = gr;
        go.encoding = dataset::EncodingMode::one_hot;
        const std::string dr = ensure_dataset(cfg, "real", gr);
        const std::string dob = ensure_dataset(cfg, "one_hot", go);
        const auto dsr = trainer::load_all(dataset::load_manifest(dr));
        const auto dso = trainer::load_all(dataset::load_manifest(dob));
        rep.arms.push_back(train_arm("real_valued", "physnet", dsr, cfg));
        rep.arms.push_back(train_arm("one_hot", "physnet", dso, cfg));
    } else if (cfg.name == "partial_vs_cascaded") {
        dataset::GenerateConfig g = base_gen(cfg);
        g.mode = "partial";
        g.plan.e_count = 2;
        g.plan.nu_count = 1;
        g.plan.force_count = 2;
        g.plan.rotations_per_axis = 2;
        const std::string dir = ensure_dataset(cfg, "partial", g);
        const auto ds = trainer::load_all(dataset::load_manifest(dir));
        rep.arms.push_back(train_arm("direct_partial", "physnet", ds, cfg));
        rep.arms.push_back(train_cascaded_arm(ds, cfg));
    } else {
        std::string names;
        for (const auto& n : experiment_names()) names += " " + n;
        throw ConfigError("unknown experiment '" + cfg.name + "'; valid names:" + names);
    }

    write_outputs(cfg, rep);
    return rep;
}

}  // namespace physvox::experiments
