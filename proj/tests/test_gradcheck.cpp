#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "physvox/gradcheck.hpp"

using namespace physvox;
using namespace physvox::gradcheck;

TEST_CASE("loss_ae and loss_prior gradients match finite differences") {
    const auto r = check_vae_terms(4, 2);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("full generator loss gradient matches finite differences") {
    const auto r = check_generator_loss(4, 2);
    MESSAGE("generator loss: max rel error ", r.max_rel_error, " over ", r.checked,
            " parameters (worst: ", r.worst_param, ")");
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("WGAN-GP discriminator loss gradient matches finite differences") {
    const auto r = check_discriminator_loss(4, 2);
    MESSAGE("discriminator loss: max rel error ", r.max_rel_error, " over ", r.checked,
            " parameters (worst: ", r.worst_param, ")");
    CHECK(r.max_rel_error < 1e-4);
}
