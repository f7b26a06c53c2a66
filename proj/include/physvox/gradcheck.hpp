#pragma once

#include <cstdint>
#include <string>

namespace physvox::gradcheck {

// Central-finite-difference verification of the analytic gradients on a tiny
// network (grid n^3, the given conv level count, batch 2, double precision).
// Every trainable parameter is perturbed individually.

struct Result {
    double max_rel_error = 0.0;
    int64_t checked = 0;
    std::string worst_param;
};

// d loss_ae / d output and d loss_prior / d (mu, logvar)
Result check_vae_terms(int n, int levels);

// full generator loss (Eq. combination of BCE, KL and the adversarial term)
// w.r.t. every encoder and generator parameter
Result check_generator_loss(int n, int levels);

// WGAN-GP discriminator loss, including the gradient-penalty double-backward,
// w.r.t. every discriminator parameter
Result check_discriminator_loss(int n, int levels);

}  // namespace physvox::gradcheck
