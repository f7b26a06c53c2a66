#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "physvox/dataset.hpp"
#include "physvox/physnet.hpp"

namespace physvox::trainer {

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 5e-5;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int64_t max_iterations = 1000;
    int critic_steps = 5;
    int64_t eval_interval = 50;
    uint64_t seed = 1;
    std::string model_variant = "physnet";  // physnet | icgan | reconstructor
    double eval_threshold = 0.8;            // binarization p for IOU
    double convergence_iou = 0.85;          // sustained for 3 evals = "converged"
    double early_stop_iou = -1.0;           // stop once sustained (<0 = off)
    void validate() const;
};

struct MetricRow {
    int64_t iteration = 0;
    double gen_loss = 0, disc_loss = 0, ae_loss = 0, prior_loss = 0, val_iou = 0;
    double wall_clock_s = 0;
};

struct MetricLog {
    std::vector<MetricRow> rows;
    bool aborted = false;
    int64_t convergence_iteration = -1;
};

// metrics.csv carries only deterministic columns; wall-clock goes to a
// sidecar so fixed-seed reruns produce identical metric files.
void save_metrics_csv(const MetricLog& log, const std::string& path);
void save_timings_csv(const MetricLog& log, const std::string& path);

struct LoadedDataset {
    std::vector<dataset::SampleRecord> records;
    std::vector<int> train_idx, val_idx, test_idx;
    int resolution = 0;
    double spacing = 0;
    dataset::EncodingMode encoding = dataset::EncodingMode::real;
    int location_count = 1;
    double f_max = 1.0;
    int condition_length() const;
};

LoadedDataset load_all(const dataset::DatasetManifest& manifest);

struct TrainResult {
    physnet::ModelWeights final_weights;
    physnet::ModelWeights best_weights;  // f32-quantized, highest validation IOU
    MetricLog log;
    double best_val_iou = 0.0;
    int64_t best_iteration = -1;
};

// WGAN-GP training: critic_steps discriminator updates per generator update,
// Adam throughout, periodic validation, best-checkpoint retention. Aborts on
// non-finite loss keeping the last good checkpoint. Deterministic per seed.
TrainResult train(const LoadedDataset& ds, physnet::NetworkConfig net_cfg, const TrainConfig& tc,
                  const std::string& checkpoint_dir = "");

// Same pipeline with the deterministic high-dimensional latent and no
// Gaussian prior term.
TrainResult train_baseline_icgan(const LoadedDataset& ds, physnet::NetworkConfig net_cfg,
                                 TrainConfig tc, const std::string& checkpoint_dir = "");

struct EvalResult {
    double mean_iou = 0.0;
    std::vector<double> per_record;
};

// Deterministic predictions (z = mu), binarized at p, IOU against targets.
EvalResult evaluate(const physnet::ModelWeights& w, const LoadedDataset& ds,
                    const std::vector<int>& indices, double p);

class Adam {
  public:
    Adam(double lr, double b1, double b2, double eps) : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}
    void step(std::map<std::string, Tensor>& weights,
              const std::map<std::string, const Tensor*>& grads);
    int64_t iterations() const { return t_; }

  private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace physvox::trainer
