#include "physvox/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "physvox/rng.hpp"

namespace ad = physvox::ad;
namespace fs = std::filesystem;

namespace physvox::trainer {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must be in [0,1)");
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (critic_steps < 1) throw ConfigError("critic_steps must be >= 1");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
    if (!(eval_threshold > 0.0 && eval_threshold < 1.0))
        throw ConfigError("eval_threshold must be in (0,1)");
    physnet::variant_from_string(model_variant);
}

int LoadedDataset::condition_length() const {
    return records.empty() ? 0 : records.front().condition.length();
}

LoadedDataset load_all(const dataset::DatasetManifest& manifest) {
    LoadedDataset ds;
    ds.resolution = manifest.resolution;
    ds.spacing = manifest.spacing;
    ds.encoding = manifest.encoding;
    ds.location_count = manifest.plan.location_count;
    for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i)
        ds.records.push_back(dataset::load_record(manifest, i));
    ds.train_idx = manifest.split_indices("train");
    ds.val_idx = manifest.split_indices("validation");
    ds.test_idx = manifest.split_indices("test");
    if (!ds.records.empty()) ds.f_max = ds.records.front().meta.f_max;
    return ds;
}

void save_metrics_csv(const MetricLog& log, const std::string& path) {
    std::ofstream os(path);
    os << "iteration,gen_loss,disc_loss,ae_loss,prior_loss,val_iou\n";
    os.precision(17);
    for (const auto& r : log.rows)
        os << r.iteration << ',' << r.gen_loss << ',' << r.disc_loss << ',' << r.ae_loss << ','
           << r.prior_loss << ',' << r.val_iou << "\n";
}

void save_timings_csv(const MetricLog& log, const std::string& path) {
    std::ofstream os(path);
    os << "iteration,wall_clock_s\n";
    for (const auto& r : log.rows) os << r.iteration << ',' << r.wall_clock_s << "\n";
}

void Adam::step(std::map<std::string, Tensor>& weights,
                const std::map<std::string, const Tensor*>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& [name, gptr] : grads) {
        Tensor& w = weights.at(name);
        const Tensor& g = *gptr;
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor(w.shape)).first;
            v_.emplace(name, Tensor(w.shape));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(name);
        const int64_t n = w.numel();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

namespace {

struct Batch {
    Tensor x, t, y;  // [B,1,N,N,N], [B,1,N,N,N], [B,n]
};

Batch make_batch(const LoadedDataset& ds, const std::vector<int>& pool, Rng& rng, int bsize) {
    const int n = ds.resolution;
    const int64_t vol = static_cast<int64_t>(n) * n * n;
    const int clen = ds.condition_length();
    Batch b;
    b.x = Tensor({bsize, 1, n, n, n});
    b.t = Tensor({bsize, 1, n, n, n});
    b.y = Tensor({bsize, clen});
    for (int i = 0; i < bsize; ++i) {
        const int ri = pool[static_cast<size_t>(rng.below(pool.size()))];
        const auto& rec = ds.records[static_cast<size_t>(ri)];
        std::copy(rec.input_grid.values.begin(), rec.input_grid.values.end(),
                  b.x.data.begin() + i * vol);
        std::copy(rec.target_grid.values.begin(), rec.target_grid.values.end(),
                  b.t.data.begin() + i * vol);
        std::copy(rec.condition.values.begin(), rec.condition.values.end(),
                  b.y.data.begin() + static_cast<int64_t>(i) * clen);
    }
    return b;
}

Tensor sample_noise(Rng& rng, int bsize, int latent) {
    Tensor z({bsize, latent});
    for (auto& v : z.data) v = rng.normal();
    return z;
}

// z from the encoder head: reparameterized for physnet, deterministic otherwise.
ad::Var latent_from(const physnet::EncoderOut& enc, physnet::Variant v, Rng& rng, int bsize,
                    int latent_dim) {
    if (v != physnet::Variant::physnet) return enc.latent;
    const ad::Var sigma = ad::exp_(ad::scale(enc.logvar, 0.5));
    return ad::add(enc.mu, ad::mul(sigma, ad::constant(sample_noise(rng, bsize, latent_dim))));
}

std::map<std::string, const Tensor*> grads_by_name(const physnet::PMap& p,
                                                   const ad::GradMap& gm) {
    std::map<std::string, const Tensor*> out;
    for (const auto& [name, var] : p) {
        if (!var->requires_grad) continue;
        auto it = gm.find(var.get());
        if (it != gm.end()) out[name] = &it->second->value;
    }
    return out;
}

}  // namespace

EvalResult evaluate(const physnet::ModelWeights& w, const LoadedDataset& ds,
                    const std::vector<int>& indices, double p) {
    if (indices.empty()) throw ParameterError("evaluate: empty split");
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("evaluate: p must be in (0,1)");
    EvalResult res;
    res.per_record.reserve(indices.size());
    double total = 0.0;
    for (int i : indices) {
        const auto& rec = ds.records[static_cast<size_t>(i)];
        const voxel::VoxelGrid out = physnet::predict(w, rec.input_grid, rec.condition, true);
        const double v = voxel::iou(out, rec.target_grid, p);
        res.per_record.push_back(v);
        total += v;
    }
    res.mean_iou = total / static_cast<double>(indices.size());
    return res;
}

TrainResult train(const LoadedDataset& ds, physnet::NetworkConfig net_cfg, const TrainConfig& tc,
                  const std::string& checkpoint_dir) {
    tc.validate();
    const physnet::Variant variant = physnet::variant_from_string(tc.model_variant);
    if (ds.records.empty()) throw ConfigError("train: dataset is empty");
    if (ds.resolution != net_cfg.grid_resolution)
        throw ConfigError("train: dataset resolution does not match network config");
    net_cfg.condition_length =
        variant == physnet::Variant::reconstructor ? 0 : ds.condition_length();
    const physnet::NetworkConfig cfg = physnet::resolve(net_cfg, variant);

    physnet::ModelWeights w = physnet::init_weights(cfg, variant, tc.seed);
    w.f_max = ds.f_max;
    w.location_count = ds.location_count;
    w.encoding = ds.encoding;

    TrainResult result;
    if (tc.max_iterations == 0) {
        result.final_weights = w;
        result.best_weights = w;
        physnet::quantize_f32(result.best_weights);
        if (!checkpoint_dir.empty()) {
            fs::create_directories(checkpoint_dir);
            physnet::save_checkpoint(result.best_weights,
                                     (fs::path(checkpoint_dir) / "checkpoint_best.pvw").string());
        }
        return result;
    }

    const std::vector<int>& train_pool = ds.train_idx.empty()
                                             ? ds.val_idx  // degenerate tiny datasets
                                             : ds.train_idx;
    if (train_pool.empty()) throw ConfigError("train: no training records");

    Rng rng(tc.seed);
    Adam adam_d(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_epsilon);
    Adam adam_g(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_epsilon);

    const int bsize = tc.batch_size;
    const double inv_b = 1.0 / bsize;
    const auto t_start = std::chrono::steady_clock::now();
    int consecutive_conv = 0, consecutive_stop = 0;
    bool stop = false;

    for (int64_t iter = 1; iter <= tc.max_iterations && !stop; ++iter) {
        double disc_loss = 0.0;

        for (int cs = 0; cs < tc.critic_steps; ++cs) {
            Batch b = make_batch(ds, train_pool, rng, bsize);
            physnet::PMap p = physnet::lift(w, {"disc."});
            const ad::Var x = ad::constant(b.x);
            const ad::Var t = ad::constant(b.t);
            ad::Var y;
            const ad::Var* yp = nullptr;
            if (cfg.condition_length > 0) {
                y = ad::constant(b.y);
                yp = &y;
            }
            const auto enc = physnet::encode(p, cfg, variant, x);
            const ad::Var z = latent_from(enc, variant, rng, bsize, cfg.latent_dim);
            const ad::Var o_graph = physnet::generate(p, cfg, z, yp, enc.skips);
            const ad::Var o = ad::constant(o_graph->value);

            const ad::Var d_fake = physnet::discriminate(p, cfg, o, yp);
            const ad::Var d_real = physnet::discriminate(p, cfg, t, yp);

            // gradient penalty on per-sample interpolates
            Tensor ohat_t(b.t.shape);
            const int64_t vol = ohat_t.numel() / bsize;
            for (int i = 0; i < bsize; ++i) {
                const double eta = rng.uniform();
                for (int64_t j = 0; j < vol; ++j) {
                    const int64_t k = i * vol + j;
                    ohat_t[k] = eta * b.t[k] + (1.0 - eta) * o->value[k];
                }
            }
            const ad::Var ohat = ad::leaf(std::move(ohat_t), true);
            const ad::Var d_hat = physnet::discriminate(p, cfg, ohat, yp);
            auto inner = ad::backward(ad::sum_all(d_hat), {ohat});
            const ad::Var g = inner.at(ohat.get());
            const ad::Var norms = ad::sqrt_(ad::sum_per_sample(ad::mul(g, g)));
            const ad::Var nm1 = ad::add_scalar(norms, -1.0);
            const ad::Var penalty = ad::scale(ad::sum_all(ad::mul(nm1, nm1)), inv_b);

            const ad::Var wdist = ad::sub(ad::scale(ad::sum_all(d_fake), inv_b),
                                          ad::scale(ad::sum_all(d_real), inv_b));
            const ad::Var loss_d = ad::add(wdist, ad::scale(penalty, cfg.lambda_gp));
            disc_loss = ad::scalar_of(loss_d);
            if (!std::isfinite(disc_loss)) {
                result.log.aborted = true;
                stop = true;
                break;
            }

            std::vector<ad::Var> wanted;
            for (const auto& [name, var] : p)
                if (var->requires_grad) wanted.push_back(var);
            auto gm = ad::backward(loss_d, wanted);
            adam_d.step(w.tensors, grads_by_name(p, gm));
        }
        if (stop) break;

        // encoder + generator update
        Batch b = make_batch(ds, train_pool, rng, bsize);
        physnet::PMap p = physnet::lift(w, {"enc.", "gen."});
        const ad::Var x = ad::constant(b.x);
        const ad::Var t = ad::constant(b.t);
        ad::Var y;
        const ad::Var* yp = nullptr;
        if (cfg.condition_length > 0) {
            y = ad::constant(b.y);
            yp = &y;
        }
        const auto enc = physnet::encode(p, cfg, variant, x);
        const ad::Var z = latent_from(enc, variant, rng, bsize, cfg.latent_dim);
        const ad::Var o = physnet::generate(p, cfg, z, yp, enc.skips);
        const ad::Var lae = physnet::loss_ae(t, o, cfg.alpha);
        ad::Var lvae = lae;
        double prior_val = 0.0;
        if (variant == physnet::Variant::physnet) {
            const ad::Var lprior = physnet::loss_prior(enc.mu, enc.logvar);
            prior_val = ad::scalar_of(lprior);
            lvae = ad::add(lae, lprior);
        }
        const ad::Var d_fake = physnet::discriminate(p, cfg, o, yp);
        const ad::Var lgan = ad::neg(ad::scale(ad::sum_all(d_fake), inv_b));
        const ad::Var loss_g =
            ad::add(ad::scale(lvae, cfg.beta), ad::scale(lgan, 1.0 - cfg.beta));
        const double gen_loss = ad::scalar_of(loss_g);
        const double ae_loss = ad::scalar_of(lae);
        if (!std::isfinite(gen_loss)) {
            result.log.aborted = true;
            break;
        }

        std::vector<ad::Var> wanted;
        for (const auto& [name, var] : p)
            if (var->requires_grad) wanted.push_back(var);
        auto gm = ad::backward(loss_g, wanted);
        adam_g.step(w.tensors, grads_by_name(p, gm));

        if (iter % tc.eval_interval == 0 || iter == tc.max_iterations) {
            physnet::ModelWeights wq = w;
            physnet::quantize_f32(wq);
            const std::vector<int>& vidx = ds.val_idx.empty() ? ds.train_idx : ds.val_idx;
            const EvalResult ev = evaluate(wq, ds, vidx, tc.eval_threshold);
            MetricRow row;
            row.iteration = iter;
            row.gen_loss = gen_loss;
            row.disc_loss = disc_loss;
            row.ae_loss = ae_loss;
            row.prior_loss = prior_val;
            row.val_iou = ev.mean_iou;
            row.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            result.log.rows.push_back(row);

            if (ev.mean_iou > result.best_val_iou || result.best_iteration < 0) {
                result.best_val_iou = ev.mean_iou;
                result.best_iteration = iter;
                result.best_weights = wq;
                if (!checkpoint_dir.empty()) {
                    fs::create_directories(checkpoint_dir);
                    physnet::save_checkpoint(
                        wq, (fs::path(checkpoint_dir) / "checkpoint_best.pvw").string());
                }
            }
            consecutive_conv = ev.mean_iou >= tc.convergence_iou ? consecutive_conv + 1 : 0;
            if (consecutive_conv >= 3 && result.log.convergence_iteration < 0)
                result.log.convergence_iteration = iter;
            if (tc.early_stop_iou > 0) {
                consecutive_stop = ev.mean_iou >= tc.early_stop_iou ? consecutive_stop + 1 : 0;
                if (consecutive_stop >= 3) stop = true;
            }
        }
    }

    result.final_weights = w;
    if (result.best_iteration < 0) {
        result.best_weights = w;
        physnet::quantize_f32(result.best_weights);
    }
    if (!checkpoint_dir.empty()) {
        fs::create_directories(checkpoint_dir);
        physnet::save_checkpoint(result.final_weights,
                                 (fs::path(checkpoint_dir) / "checkpoint_final.pvw").string());
        if (result.best_iteration < 0)
            physnet::save_checkpoint(result.best_weights,
                                     (fs::path(checkpoint_dir) / "checkpoint_best.pvw").string());
    }
    return result;
}

TrainResult train_baseline_icgan(const LoadedDataset& ds, physnet::NetworkConfig net_cfg,
                                 TrainConfig tc, const std::string& checkpoint_dir) {
    tc.model_variant = "icgan";
    return train(ds, net_cfg, tc, checkpoint_dir);
}

}  // namespace physvox::trainer
