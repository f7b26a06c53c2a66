#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "physvox/cascade.hpp"
#include "physvox/dataset.hpp"
#include "physvox/experiments.hpp"
#include "physvox/physnet.hpp"
#include "physvox/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace physvox;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void check_keys(const ordered_json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown config key '" + key + "' in " + where);
}

struct CliConfig {
    uint64_t seed = 1;
    dataset::GenerateConfig gen;
    physnet::NetworkConfig net;
    trainer::TrainConfig train;
    std::vector<uint64_t> exp_seeds{1, 2, 3};
    int dense_e_count = 64;
    int location_arm_count = 6;
};

void apply_json(CliConfig& c, const ordered_json& j) {
    check_keys(j, {"seed", "generate", "network", "train", "experiment"}, "config");
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("generate")) {
        const auto& g = j["generate"];
        check_keys(g, {"mode", "resolution", "spacing", "encoding", "objects", "plan"},
                   "generate");
        if (g.contains("mode")) c.gen.mode = g["mode"].get<std::string>();
        if (g.contains("resolution")) c.gen.resolution = g["resolution"].get<int>();
        if (g.contains("spacing")) c.gen.spacing = g["spacing"].get<double>();
        if (g.contains("encoding"))
            c.gen.encoding = g["encoding"].get<std::string>() == "one_hot"
                                 ? dataset::EncodingMode::one_hot
                                 : dataset::EncodingMode::real;
        if (g.contains("objects")) {
            c.gen.objects.clear();
            for (const auto& o : g["objects"]) {
                check_keys(o, {"id", "kind", "path"}, "objects");
                dataset::ObjectSpec spec;
                spec.id = o.at("id").get<std::string>();
                spec.kind = dataset::primitive_from_string(o.at("kind").get<std::string>());
                if (o.contains("path")) spec.path = o["path"].get<std::string>();
                c.gen.objects.push_back(spec);
            }
        }
        if (g.contains("plan")) {
            const auto& p = g["plan"];
            check_keys(p,
                       {"e_count", "nu_count", "force_count", "location_count",
                        "scale_samples_per_axis", "rotations_per_axis", "midpoint_offset"},
                       "plan");
            auto& pl = c.gen.plan;
            if (p.contains("e_count")) pl.e_count = p["e_count"].get<int>();
            if (p.contains("nu_count")) pl.nu_count = p["nu_count"].get<int>();
            if (p.contains("force_count")) pl.force_count = p["force_count"].get<int>();
            if (p.contains("location_count")) pl.location_count = p["location_count"].get<int>();
            if (p.contains("scale_samples_per_axis"))
                pl.scale_samples_per_axis = p["scale_samples_per_axis"].get<int>();
            if (p.contains("rotations_per_axis"))
                pl.rotations_per_axis = p["rotations_per_axis"].get<int>();
            if (p.contains("midpoint_offset"))
                pl.midpoint_offset = p["midpoint_offset"].get<bool>();
        }
    }
    if (j.contains("network")) {
        const auto& n = j["network"];
        check_keys(n,
                   {"grid_resolution", "conv_levels", "base_channels", "latent_dim",
                    "flatten_dim", "critic_dense_dim", "alpha", "beta", "lambda_gp"},
                   "network");
        if (n.contains("grid_resolution")) c.net.grid_resolution = n["grid_resolution"].get<int>();
        if (n.contains("conv_levels")) c.net.conv_levels = n["conv_levels"].get<int>();
        if (n.contains("base_channels")) c.net.base_channels = n["base_channels"].get<int>();
        if (n.contains("latent_dim")) c.net.latent_dim = n["latent_dim"].get<int>();
        if (n.contains("flatten_dim")) c.net.flatten_dim = n["flatten_dim"].get<int>();
        if (n.contains("critic_dense_dim"))
            c.net.critic_dense_dim = n["critic_dense_dim"].get<int>();
        if (n.contains("alpha")) c.net.alpha = n["alpha"].get<double>();
        if (n.contains("beta")) c.net.beta = n["beta"].get<double>();
        if (n.contains("lambda_gp")) c.net.lambda_gp = n["lambda_gp"].get<double>();
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t,
                   {"batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                    "max_iterations", "critic_steps", "eval_interval", "model_variant",
                    "eval_threshold", "convergence_iou", "early_stop_iou"},
                   "train");
        auto& tc = c.train;
        if (t.contains("batch_size")) tc.batch_size = t["batch_size"].get<int>();
        if (t.contains("learning_rate")) tc.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("adam_beta1")) tc.adam_beta1 = t["adam_beta1"].get<double>();
        if (t.contains("adam_beta2")) tc.adam_beta2 = t["adam_beta2"].get<double>();
        if (t.contains("adam_epsilon")) tc.adam_epsilon = t["adam_epsilon"].get<double>();
        if (t.contains("max_iterations")) tc.max_iterations = t["max_iterations"].get<int64_t>();
        if (t.contains("critic_steps")) tc.critic_steps = t["critic_steps"].get<int>();
        if (t.contains("eval_interval")) tc.eval_interval = t["eval_interval"].get<int64_t>();
        if (t.contains("model_variant")) tc.model_variant = t["model_variant"].get<std::string>();
        if (t.contains("eval_threshold")) tc.eval_threshold = t["eval_threshold"].get<double>();
        if (t.contains("convergence_iou")) tc.convergence_iou = t["convergence_iou"].get<double>();
        if (t.contains("early_stop_iou")) tc.early_stop_iou = t["early_stop_iou"].get<double>();
    }
    if (j.contains("experiment")) {
        const auto& e = j["experiment"];
        check_keys(e, {"seeds", "dense_e_count", "location_arm_count"}, "experiment");
        if (e.contains("seeds")) c.exp_seeds = e["seeds"].get<std::vector<uint64_t>>();
        if (e.contains("dense_e_count")) c.dense_e_count = e["dense_e_count"].get<int>();
        if (e.contains("location_arm_count"))
            c.location_arm_count = e["location_arm_count"].get<int>();
    }
}

CliConfig load_config(const std::string& path) {
    CliConfig c;
    if (path.empty()) return c;
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    ordered_json j;
    is >> j;
    apply_json(c, j);
    return c;
}

ordered_json resolved_json(const CliConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    ordered_json g;
    g["mode"] = c.gen.mode;
    g["resolution"] = c.gen.resolution;
    g["spacing"] = c.gen.spacing;
    g["encoding"] = c.gen.encoding == dataset::EncodingMode::real ? "real" : "one_hot";
    ordered_json objs = ordered_json::array();
    for (const auto& o : c.gen.objects) {
        ordered_json oj;
        oj["id"] = o.id;
        switch (o.kind) {
            case dataset::PrimitiveKind::bridge: oj["kind"] = "bridge"; break;
            case dataset::PrimitiveKind::beam: oj["kind"] = "beam"; break;
            case dataset::PrimitiveKind::block: oj["kind"] = "block"; break;
            case dataset::PrimitiveKind::cylinder: oj["kind"] = "cylinder"; break;
            case dataset::PrimitiveKind::custom: oj["kind"] = "custom"; break;
        }
        if (!o.path.empty()) oj["path"] = o.path;
        objs.push_back(oj);
    }
    g["objects"] = objs;
    ordered_json p;
    p["e_count"] = c.gen.plan.e_count;
    p["nu_count"] = c.gen.plan.nu_count;
    p["force_count"] = c.gen.plan.force_count;
    p["location_count"] = c.gen.plan.location_count;
    p["scale_samples_per_axis"] = c.gen.plan.scale_samples_per_axis;
    p["rotations_per_axis"] = c.gen.plan.rotations_per_axis;
    p["midpoint_offset"] = c.gen.plan.midpoint_offset;
    g["plan"] = p;
    j["generate"] = g;
    ordered_json n;
    n["grid_resolution"] = c.net.grid_resolution;
    n["conv_levels"] = c.net.conv_levels;
    n["base_channels"] = c.net.base_channels;
    n["latent_dim"] = c.net.latent_dim;
    n["flatten_dim"] = c.net.flatten_dim;
    n["critic_dense_dim"] = c.net.critic_dense_dim;
    n["alpha"] = c.net.alpha;
    n["beta"] = c.net.beta;
    n["lambda_gp"] = c.net.lambda_gp;
    j["network"] = n;
    ordered_json t;
    t["batch_size"] = c.train.batch_size;
    t["learning_rate"] = c.train.learning_rate;
    t["adam_beta1"] = c.train.adam_beta1;
    t["adam_beta2"] = c.train.adam_beta2;
    t["adam_epsilon"] = c.train.adam_epsilon;
    t["max_iterations"] = c.train.max_iterations;
    t["critic_steps"] = c.train.critic_steps;
    t["eval_interval"] = c.train.eval_interval;
    t["model_variant"] = c.train.model_variant;
    t["eval_threshold"] = c.train.eval_threshold;
    t["convergence_iou"] = c.train.convergence_iou;
    t["early_stop_iou"] = c.train.early_stop_iou;
    j["train"] = t;
    return j;
}

void echo_config(const CliConfig& c, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "config_resolved.json");
    os << resolved_json(c).dump(2) << "\n";
}

voxel::VoxelGrid load_input_grid(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".dph") {
        const voxel::DepthImage d = voxel::load_depth(path);
        return voxel::depth_to_partial_grid(d, d.width);
    }
    return voxel::load_grid(path);
}

dataset::ConditionVector parse_condition(const std::string& s, double f_max, int location_count,
                                         dataset::EncodingMode mode) {
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 4)
        throw ParameterError("condition must be E,nu,F,location (raw physical values)");
    elastic::MaterialParams m{vals[0], vals[1]};
    if (vals[0] < elastic::kEminGpa || vals[0] > elastic::kEmaxGpa)
        throw ParameterError("condition field E out of range [1e-5, 23] GPa");
    if (vals[1] < 0.0 || vals[1] > elastic::kNuMax)
        throw ParameterError("condition field nu out of range [0, 0.4995]");
    if (vals[2] < 0 || vals[2] > f_max)
        throw ParameterError("condition field F out of range [0, f_max=" + std::to_string(f_max) +
                             "]");
    const int loc = static_cast<int>(std::lround(vals[3]));
    if (loc < 0 || loc >= location_count)
        throw ParameterError("condition field location out of range [0, " +
                             std::to_string(location_count - 1) + "]");
    return dataset::encode_condition(m, {vals[2], loc, {0, 0, -1}}, f_max, mode, location_count);
}

int run_generate(const CliConfig& cfg, const std::string& out_dir, bool force) {
    CliConfig c = cfg;
    c.gen.seed = c.seed;
    c.gen.overwrite = force;
    if (c.gen.objects.empty()) c.gen.objects = {{"bridge", dataset::PrimitiveKind::bridge, ""}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto man = dataset::generate_dataset(c.gen, out_dir);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    echo_config(c, out_dir);
    std::cout << "manifest: " << (fs::path(out_dir) / "manifest.json").string() << "\n"
              << "records: " << man.record_count << "\n"
              << "skipped: " << man.skip_count << "\n"
              << "wall_clock_s: " << secs << "\n";
    return 0;
}

int run_train(CliConfig& cfg, const std::string& dataset_dir, const std::string& variant,
              const std::string& out_dir) {
    const auto man = dataset::load_manifest(dataset_dir);
    trainer::LoadedDataset ds = trainer::load_all(man);
    cfg.net.grid_resolution = man.resolution;
    cfg.train.seed = cfg.seed;
    fs::create_directories(out_dir);

    trainer::TrainResult res;
    if (variant == "physnet") {
        cfg.train.model_variant = "physnet";
        res = trainer::train(ds, cfg.net, cfg.train, out_dir);
    } else if (variant == "icgan") {
        res = trainer::train_baseline_icgan(ds, cfg.net, cfg.train, out_dir);
    } else if (variant == "reconstructor") {
        // reconstruction ground truth = zero-force records of a partial dataset
        trainer::LoadedDataset recon_ds =
            man.mode == "partial" ? cascade::filter_force_zero(ds, true) : ds;
        res = cascade::train_reconstructor(recon_ds, cfg.net, cfg.train, out_dir);
    } else if (variant == "direct-partial") {
        res = cascade::train_direct_partial(ds, cfg.net, cfg.train, out_dir);
    } else {
        throw ConfigError("unknown variant '" + variant +
                          "' (physnet|icgan|reconstructor|direct-partial)");
    }
    trainer::save_metrics_csv(res.log, (fs::path(out_dir) / "metrics.csv").string());
    trainer::save_timings_csv(res.log, (fs::path(out_dir) / "timings.csv").string());
    echo_config(cfg, out_dir);
    if (res.log.aborted) {
        std::cerr << "training aborted on non-finite loss; last good checkpoint: "
                  << (fs::path(out_dir) / "checkpoint_best.pvw").string() << "\n";
        return kExitRuntime;
    }
    std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint_best.pvw").string() << "\n"
              << "best_val_iou: " << res.best_val_iou << " at iteration " << res.best_iteration
              << "\n";
    return 0;
}

int run_predict(const std::string& model_path, const std::string& pipeline_dir,
                const std::string& input_path, const std::string& condition_str,
                const std::string& target_path, const std::string& out_path, bool bypass,
                double p) {
    const voxel::VoxelGrid input = load_input_grid(input_path);
    voxel::VoxelGrid out_grid;
    double elapsed_ms = 0.0;
    if (!pipeline_dir.empty()) {
        const cascade::CascadePipeline pl = cascade::load_pipeline(pipeline_dir);
        const auto y = parse_condition(condition_str, pl.deformer.f_max,
                                       pl.deformer.location_count, pl.deformer.encoding);
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = cascade::cascaded_predict(input, y, pl, bypass);
        elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        out_grid = res.grid;
    } else {
        const physnet::ModelWeights w = physnet::load_checkpoint(model_path);
        const auto y = parse_condition(condition_str, w.f_max, w.location_count, w.encoding);
        const auto t0 = std::chrono::steady_clock::now();
        out_grid = physnet::predict(w, input, y, true);
        elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    }
    voxel::save_grid(out_grid, out_path);
    const voxel::VoxelGrid binary = voxel::binarize(out_grid, p);
    voxel::save_grid(binary, out_path + ".bin.vxg");
    std::cout << "prediction: " << out_path << "\n"
              << "binarized: " << out_path << ".bin.vxg\n"
              << "forward_pass_ms: " << elapsed_ms << "\n";
    if (!target_path.empty()) {
        const voxel::VoxelGrid target = voxel::load_grid(target_path);
        std::cout << "iou: " << voxel::iou(out_grid, target, p) << "\n";
    }
    return 0;
}

int run_evaluate(const std::string& model_path, const std::string& dataset_dir,
                 const std::string& split, double p) {
    const physnet::ModelWeights w = physnet::load_checkpoint(model_path);
    const auto man = dataset::load_manifest(dataset_dir);
    const trainer::LoadedDataset ds = trainer::load_all(man);
    const auto idx = man.split_indices(split);
    const auto res = trainer::evaluate(w, ds, idx, p);
    std::cout << "records: " << idx.size() << "\n"
              << "mean_iou: " << res.mean_iou << "\n";
    return 0;
}

int run_experiment_cmd(CliConfig& cfg, const std::string& name, const std::string& out_dir,
                       bool autogen, const std::vector<std::string>& dataset_args) {
    experiments::ExperimentConfig ec;
    ec.name = name;
    ec.out_dir = out_dir;
    ec.net = cfg.net;
    ec.train = cfg.train;
    ec.seeds = cfg.exp_seeds;
    ec.autogen = autogen;
    ec.data_seed = cfg.seed;
    ec.dense_e_count = cfg.dense_e_count;
    ec.location_arm_count = cfg.location_arm_count;
    for (const auto& kv : dataset_args) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--dataset expects role=dir, got: " + kv);
        ec.datasets[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    echo_config(cfg, out_dir);
    const auto rep = experiments::run_experiment(ec);
    std::cout << "report: " << (fs::path(out_dir) / "report.json").string() << "\n";
    for (const auto& arm : rep.arms)
        std::cout << arm.label << ": mean final IOU " << arm.mean_final_iou << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FEM-simulated voxel deformation datasets and conditional VAE-GAN "
                 "deformation prediction"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, variant = "physnet";
    std::string model_path, pipeline_dir, input_path, condition_str, target_path, out_path;
    std::string split = "test", exp_name;
    std::vector<std::string> dataset_args;
    bool force = false, autogen = false, bypass = false;
    double p = 0.8;

    uint64_t seed = 0;
    int resolution = 0, base_channels = 0, conv_levels = -1;
    int64_t iterations = -1, eval_interval = 0;
    double lr = 0, alpha = 0, beta = 0, lambda_gp = -1, early_stop = -2;
    int batch = 0, critic_steps = 0;
    std::string mode, encoding, object_kind;
    int e_count = 0, nu_count = 0, force_count = 0, locations = 0, scales = 0, rotations = 0;
    bool midpoint = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", seed, "global seed");
    };

    auto* g = app.add_subcommand("generate", "generate an FEM ground-truth dataset");
    add_common(g);
    g->add_option("--out", out_dir, "output dataset directory")->required();
    g->add_option("--mode", mode, "full3d|partial");
    g->add_option("--resolution", resolution, "grid resolution (power of two)");
    g->add_option("--object", object_kind, "primitive kind (bridge|beam|block|cylinder)");
    g->add_option("--e-count", e_count, "Young's modulus sample count");
    g->add_option("--nu-count", nu_count, "Poisson ratio sample count");
    g->add_option("--force-count", force_count, "force magnitude sample count");
    g->add_option("--locations", locations, "force location count");
    g->add_option("--scales", scales, "stretch scales per axis");
    g->add_option("--rotations", rotations, "rotations per axis (partial mode)");
    g->add_flag("--midpoint-offset", midpoint, "sample materials at bin midpoints");
    g->add_option("--encoding", encoding, "condition location encoding: real|one_hot");
    g->add_flag("--force", force, "overwrite an existing dataset");

    auto* t = app.add_subcommand("train", "train a model on a generated dataset");
    add_common(t);
    t->add_option("--dataset", dataset_dir, "dataset directory")->required();
    t->add_option("--out", out_dir, "run output directory")->required();
    t->add_option("--variant", variant, "physnet|icgan|reconstructor|direct-partial");
    t->add_option("--iterations", iterations, "max training iterations");
    t->add_option("--lr", lr, "learning rate");
    t->add_option("--batch", batch, "batch size");
    t->add_option("--critic-steps", critic_steps, "discriminator updates per generator update");
    t->add_option("--eval-interval", eval_interval, "iterations between validations");
    t->add_option("--base-channels", base_channels, "conv channel width");
    t->add_option("--conv-levels", conv_levels, "conv levels (0 = auto)");
    t->add_option("--alpha", alpha, "BCE balance");
    t->add_option("--beta", beta, "VAE/GAN balance");
    t->add_option("--lambda", lambda_gp, "gradient penalty weight");
    t->add_option("--early-stop-iou", early_stop, "stop once val IOU sustains this (<0 off)");

    auto* pr = app.add_subcommand("predict", "predict a deformation for one input");
    pr->add_option("--model", model_path, "model checkpoint (.pvw)");
    pr->add_option("--pipeline", pipeline_dir, "cascade pipeline directory");
    pr->add_option("--input", input_path, "input grid (.vxg) or depth image (.dph)")->required();
    pr->add_option("--condition", condition_str, "raw E,nu,F,location")->required();
    pr->add_option("--target", target_path, "optional ground-truth grid for IOU");
    pr->add_option("--out", out_path, "output grid path")->required();
    pr->add_option("--p", p, "binarization threshold");
    pr->add_flag("--bypass-recon", bypass, "treat the input as a full grid (pipeline mode)");

    auto* ev = app.add_subcommand("evaluate", "mean IOU of a model over a dataset split");
    ev->add_option("--model", model_path, "model checkpoint (.pvw)")->required();
    ev->add_option("--dataset", dataset_dir, "dataset directory")->required();
    ev->add_option("--split", split, "train|validation|test|all");
    ev->add_option("--p", p, "binarization threshold");

    auto* ex = app.add_subcommand("experiment", "run a named comparison experiment");
    add_common(ex);
    ex->add_option("name", exp_name, "experiment name")->required();
    ex->add_option("--out", out_dir, "output directory")->required();
    ex->add_flag("--autogen", autogen, "generate missing desk-scale datasets");
    ex->add_option("--dataset", dataset_args, "role=dir dataset binding (repeatable)");
    ex->add_option("--iterations", iterations, "training budget per arm");
    ex->add_option("--base-channels", base_channels, "conv channel width");
    ex->add_option("--resolution", resolution, "grid resolution");
    ex->add_option("--lr", lr, "learning rate");
    ex->add_option("--critic-steps", critic_steps, "discriminator updates per generator update");
    ex->add_option("--eval-interval", eval_interval, "iterations between validations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        CliConfig cfg = load_config(config_path);
        if (seed) cfg.seed = seed;
        if (resolution) {
            cfg.gen.resolution = resolution;
            cfg.net.grid_resolution = resolution;
        }
        if (!mode.empty()) cfg.gen.mode = mode;
        if (!object_kind.empty())
            cfg.gen.objects = {{object_kind, dataset::primitive_from_string(object_kind), ""}};
        if (e_count) cfg.gen.plan.e_count = e_count;
        if (nu_count) cfg.gen.plan.nu_count = nu_count;
        if (force_count) cfg.gen.plan.force_count = force_count;
        if (locations) cfg.gen.plan.location_count = locations;
        if (scales) cfg.gen.plan.scale_samples_per_axis = scales;
        if (rotations) cfg.gen.plan.rotations_per_axis = rotations;
        if (midpoint) cfg.gen.plan.midpoint_offset = true;
        if (!encoding.empty())
            cfg.gen.encoding = encoding == "one_hot" ? dataset::EncodingMode::one_hot
                                                     : dataset::EncodingMode::real;
        if (iterations >= 0) cfg.train.max_iterations = iterations;
        if (lr > 0) cfg.train.learning_rate = lr;
        if (batch) cfg.train.batch_size = batch;
        if (critic_steps) cfg.train.critic_steps = critic_steps;
        if (eval_interval) cfg.train.eval_interval = eval_interval;
        if (base_channels) cfg.net.base_channels = base_channels;
        if (conv_levels >= 0) cfg.net.conv_levels = conv_levels;
        if (alpha > 0) cfg.net.alpha = alpha;
        if (beta > 0) cfg.net.beta = beta;
        if (lambda_gp >= 0) cfg.net.lambda_gp = lambda_gp;
        if (early_stop > -2) cfg.train.early_stop_iou = early_stop;

        if (g->parsed()) return run_generate(cfg, out_dir, force);
        if (t->parsed()) return run_train(cfg, dataset_dir, variant, out_dir);
        if (pr->parsed()) {
            if (model_path.empty() == pipeline_dir.empty())
                throw ConfigError("predict needs exactly one of --model or --pipeline");
            return run_predict(model_path, pipeline_dir, input_path, condition_str, target_path,
                               out_path, bypass, p);
        }
        if (ev->parsed()) return run_evaluate(model_path, dataset_dir, split, p);
        if (ex->parsed()) return run_experiment_cmd(cfg, exp_name, out_dir, autogen, dataset_args);
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
