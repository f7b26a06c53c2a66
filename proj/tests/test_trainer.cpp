#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "physvox/dataset.hpp"
#include "physvox/trainer.hpp"

using namespace physvox;
using namespace physvox::trainer;

namespace fs = std::filesystem;

namespace {

// tiny 8^3 dataset shared across cases, generated once
const LoadedDataset& tiny_dataset() {
    static LoadedDataset ds = [] {
        const auto dir = fs::temp_directory_path() / "physvox_trainer_ds";
        fs::remove_all(dir);
        dataset::GenerateConfig cfg;
        cfg.plan.e_count = 3;
        cfg.plan.nu_count = 2;
        cfg.plan.force_count = 2;
        cfg.resolution = 8;
        cfg.objects = {{"block", dataset::PrimitiveKind::block, ""}};
        cfg.seed = 99;
        const auto man = dataset::generate_dataset(cfg, dir.string());
        return load_all(man);
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

TrainConfig fast_tc(int64_t iters) {
    TrainConfig tc;
    tc.max_iterations = iters;
    tc.batch_size = 4;
    tc.critic_steps = 2;
    tc.eval_interval = 2;
    tc.learning_rate = 1e-3;
    tc.seed = 5;
    return tc;
}

}  // namespace

TEST_CASE("default train config matches the published hyperparameters") {
    TrainConfig tc;
    CHECK(tc.batch_size == 8);
    CHECK(tc.learning_rate == doctest::Approx(5e-5));
    CHECK(tc.adam_beta1 == doctest::Approx(0.5));
    CHECK(tc.adam_beta2 == doctest::Approx(0.999));
    CHECK(tc.adam_epsilon == doctest::Approx(1e-8));
    CHECK(tc.critic_steps == 5);
    CHECK(tc.eval_threshold == doctest::Approx(0.8));
    CHECK_NOTHROW(tc.validate());
    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Adam: zero gradient leaves weights unchanged") {
    std::map<std::string, Tensor> w{{"p", Tensor({3}, {1.0, -2.0, 3.0})}};
    const Tensor zero({3});
    Adam opt(0.1, 0.5, 0.999, 1e-8);
    opt.step(w, {{"p", &zero}});
    CHECK(w.at("p").data == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("Adam: constant gradient converges to -lr * sign(g) steps") {
    std::map<std::string, Tensor> w{{"p", Tensor({2}, {0.0, 0.0})}};
    const Tensor g({2}, {0.37, -2.2});
    const double lr = 0.01;
    Adam opt(lr, 0.5, 0.999, 1e-8);
    for (int i = 0; i < 1000; ++i) opt.step(w, {{"p", &g}});
    const double before0 = w.at("p")[0], before1 = w.at("p")[1];
    opt.step(w, {{"p", &g}});
    CHECK(w.at("p")[0] - before0 == doctest::Approx(-lr).epsilon(0.01));
    CHECK(w.at("p")[1] - before1 == doctest::Approx(lr).epsilon(0.01));
}

TEST_CASE("zero iterations returns initialized weights and empty log") {
    const auto& ds = tiny_dataset();
    const auto res = train(ds, tiny_net(), fast_tc(0));
    CHECK(res.log.rows.empty());
    CHECK_FALSE(res.log.aborted);
    CHECK(!res.final_weights.tensors.empty());
}

TEST_CASE("training runs, logs metrics and is reproducible") {
    const auto& ds = tiny_dataset();
    const auto r1 = train(ds, tiny_net(), fast_tc(4));
    const auto r2 = train(ds, tiny_net(), fast_tc(4));

    REQUIRE(r1.log.rows.size() == 2);
    for (size_t i = 1; i < r1.log.rows.size(); ++i)
        CHECK(r1.log.rows[i].iteration > r1.log.rows[i - 1].iteration);

    REQUIRE(r2.log.rows.size() == r1.log.rows.size());
    for (size_t i = 0; i < r1.log.rows.size(); ++i) {
        CHECK(r1.log.rows[i].gen_loss == r2.log.rows[i].gen_loss);
        CHECK(r1.log.rows[i].disc_loss == r2.log.rows[i].disc_loss);
        CHECK(r1.log.rows[i].val_iou == r2.log.rows[i].val_iou);
    }

    // weights identical too
    for (const auto& [name, t] : r1.final_weights.tensors)
        CHECK(t.data == r2.final_weights.tensors.at(name).data);
}

TEST_CASE("icgan baseline trains without the prior term") {
    const auto& ds = tiny_dataset();
    const auto res = train_baseline_icgan(ds, tiny_net(), fast_tc(2));
    REQUIRE(!res.log.rows.empty());
    for (const auto& row : res.log.rows) CHECK(row.prior_loss == 0.0);
    CHECK(res.final_weights.variant == physnet::Variant::icgan);
    CHECK(res.final_weights.tensors.count("enc.lat.w") == 1);
    CHECK(res.final_weights.tensors.count("enc.mu.w") == 0);
}

TEST_CASE("checkpoint save -> load -> evaluate reproduces the validation IOU") {
    const auto dir = fs::temp_directory_path() / "physvox_trainer_ckpt";
    fs::remove_all(dir);
    const auto& ds = tiny_dataset();
    const auto res = train(ds, tiny_net(), fast_tc(4), dir.string());
    REQUIRE(fs::exists(dir / "checkpoint_best.pvw"));
    REQUIRE(fs::exists(dir / "checkpoint_final.pvw"));

    const auto loaded = physnet::load_checkpoint((dir / "checkpoint_best.pvw").string());
    const auto ev = evaluate(loaded, ds, ds.val_idx, 0.8);
    CHECK(ev.mean_iou == res.best_val_iou);  // exact: eval weights are f32-quantized
    fs::remove_all(dir);
}

TEST_CASE("evaluate rejects an empty split and bad p") {
    const auto& ds = tiny_dataset();
    const auto res = train(ds, tiny_net(), fast_tc(0));
    CHECK_THROWS_AS(evaluate(res.best_weights, ds, {}, 0.8), ParameterError);
    CHECK_THROWS_AS(evaluate(res.best_weights, ds, ds.val_idx, 1.5), ParameterError);
    const auto ev = evaluate(res.best_weights, ds, ds.val_idx, 0.8);
    CHECK(ev.mean_iou >= 0.0);
    CHECK(ev.mean_iou <= 1.0);
}

TEST_CASE("non-finite loss aborts and keeps the log consistent") {
    const auto& ds = tiny_dataset();
    TrainConfig tc = fast_tc(50);
    tc.learning_rate = 1e18;  // guaranteed blow-up
    const auto res = train(ds, tiny_net(), tc);
    CHECK(res.log.aborted);
    // no row after the abort iteration
    for (size_t i = 1; i < res.log.rows.size(); ++i)
        CHECK(res.log.rows[i].iteration > res.log.rows[i - 1].iteration);
}

TEST_CASE("metrics CSV is deterministic; wall clock lives in the sidecar") {
    const auto dir = fs::temp_directory_path() / "physvox_trainer_csv";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto& ds = tiny_dataset();
    const auto r1 = train(ds, tiny_net(), fast_tc(4));
    const auto r2 = train(ds, tiny_net(), fast_tc(4));
    save_metrics_csv(r1.log, (dir / "m1.csv").string());
    save_metrics_csv(r2.log, (dir / "m2.csv").string());
    std::ifstream f1(dir / "m1.csv"), f2(dir / "m2.csv");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().find("wall") == std::string::npos);
    save_timings_csv(r1.log, (dir / "t1.csv").string());
    std::ifstream t1(dir / "t1.csv");
    std::string header;
    std::getline(t1, header);
    CHECK(header == "iteration,wall_clock_s");
    fs::remove_all(dir);
}

TEST_CASE("dataset/config mismatch raises a config error") {
    const auto& ds = tiny_dataset();
    physnet::NetworkConfig net = tiny_net();
    net.grid_resolution = 16;
    CHECK_THROWS_AS(train(ds, net, fast_tc(1)), ConfigError);
}
