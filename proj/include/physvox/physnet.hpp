#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "physvox/autodiff.hpp"
#include "physvox/dataset.hpp"
#include "physvox/rng.hpp"
#include "physvox/tensor.hpp"
#include "physvox/voxel.hpp"

namespace physvox::physnet {

// Conv ladder: conv_levels strided 4^3/2^3 convolutions (ReLU, last level
// sigmoid) halving the grid each level; the generator mirrors it with
// transposed convolutions and encoder skip concatenations.
struct NetworkConfig {
    int grid_resolution = 64;
    int conv_levels = 0;       // 0 = log2(N) - 1
    int base_channels = 64;
    int latent_dim = 0;        // 0 = max(64, 800 * N^3 / 64^3)
    int flatten_dim = 0;       // 0 = max(64, 5000 * N^3 / 64^3)
    int critic_dense_dim = 0;  // 0 = max(64, 32768 * N^3 / 64^3)
    double alpha = 0.85;       // BCE false-negative/false-positive balance
    double beta = 0.9;         // VAE vs GAN balance
    double lambda_gp = 10.0;   // gradient-penalty weight
    int condition_length = 4;

    void validate() const;
};

enum class Variant : uint8_t { physnet = 0, icgan = 1, reconstructor = 2 };
std::string variant_name(Variant v);
Variant variant_from_string(const std::string& s);

// Fills the auto (zero) fields; latent for deterministic-latent variants uses
// the 5000-at-64^3 rule instead of 800.
NetworkConfig resolve(NetworkConfig cfg, Variant v);
uint64_t fingerprint(const NetworkConfig& cfg);

int enc_channels(const NetworkConfig& cfg, int level);  // 1-based

struct LatentCode {
    std::vector<double> mu;
    std::vector<double> sigma;  // elementwise positive
};

std::vector<double> reparameterize(const LatentCode& c, const std::vector<double>& noise);

struct ModelWeights {
    std::map<std::string, Tensor> tensors;
    NetworkConfig config;  // resolved
    Variant variant = Variant::physnet;
    // condition-encoding metadata carried for prediction
    double f_max = 1.0;
    int location_count = 1;
    dataset::EncodingMode encoding = dataset::EncodingMode::real;
};

ModelWeights init_weights(const NetworkConfig& cfg, Variant v, uint64_t seed);
// Rounds every tensor through f32 so in-memory evaluation matches a
// checkpoint round trip exactly.
void quantize_f32(ModelWeights& w);

// Single-file checkpoint: versioned header, config fingerprint, named f32
// tensors with shape metadata.
void save_checkpoint(const ModelWeights& w, const std::string& path);
ModelWeights load_checkpoint(const std::string& path);

using PMap = std::map<std::string, ad::Var>;
// Lifts weight tensors into graph leaves; names starting with a prefix in
// `trainable` require grad.
PMap lift(const ModelWeights& w, const std::set<std::string>& trainable);

struct EncoderOut {
    ad::Var mu;              // [B, latent]
    ad::Var logvar;          // physnet only
    ad::Var latent;          // deterministic-latent variants
    std::vector<ad::Var> skips;  // conv outputs, levels 1..L-1
};

EncoderOut encode(const PMap& p, const NetworkConfig& cfg, Variant v, const ad::Var& x);
ad::Var generate(const PMap& p, const NetworkConfig& cfg, const ad::Var& z, const ad::Var* y,
                 const std::vector<ad::Var>& skips);
// Per-sample critic values [B]: mean of the dense similarity vector.
ad::Var discriminate(const PMap& p, const NetworkConfig& cfg, const ad::Var& grid,
                     const ad::Var* y);

// Loss graph builders (batch means).
ad::Var loss_ae(const ad::Var& target, const ad::Var& out, double alpha);
ad::Var loss_prior(const ad::Var& mu, const ad::Var& logvar);

// Scalar convenience forms of the loss contracts.
double loss_ae_value(const voxel::VoxelGrid& target, const voxel::VoxelGrid& out, double alpha);
double loss_prior_value(const LatentCode& c);

// encode -> (mu | reparameterized sample) -> generate. Returns a
// probabilistic grid in (0,1); callers binarize at their threshold.
voxel::VoxelGrid predict(const ModelWeights& w, const voxel::VoxelGrid& x,
                         const dataset::ConditionVector& y, bool deterministic,
                         Rng* rng = nullptr);

Tensor grid_to_tensor(const voxel::VoxelGrid& g);                       // [1,1,N,N,N]
voxel::VoxelGrid tensor_to_grid(const Tensor& t, double spacing);       // probabilistic

}  // namespace physvox::physnet
