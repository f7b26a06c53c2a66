#include "physvox/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "physvox/physnet.hpp"
#include "physvox/rng.hpp"

namespace ad = physvox::ad;
namespace pn = physvox::physnet;

namespace physvox::gradcheck {

namespace {

struct Fixture {
    pn::NetworkConfig cfg;
    pn::ModelWeights w;
    Tensor x, t, y, noise, o_fake;
    std::vector<double> eta;
    int batch = 2;
};

Fixture make_fixture(int n, int levels) {
    Fixture f;
    pn::NetworkConfig cfg;
    cfg.grid_resolution = n;
    cfg.conv_levels = levels;
    cfg.base_channels = 2;
    cfg.latent_dim = 6;
    cfg.flatten_dim = 6;
    cfg.critic_dense_dim = 6;
    cfg.condition_length = 3;
    f.cfg = pn::resolve(cfg, pn::Variant::physnet);
    f.w = pn::init_weights(f.cfg, pn::Variant::physnet, 918273);

    Rng rng(5150);
    f.x = Tensor({f.batch, 1, n, n, n});
    f.t = Tensor({f.batch, 1, n, n, n});
    for (auto& v : f.x.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (auto& v : f.t.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    f.y = Tensor({f.batch, 3});
    for (auto& v : f.y.data) v = rng.uniform();
    f.noise = Tensor({f.batch, f.cfg.latent_dim});
    for (auto& v : f.noise.data) v = rng.normal();
    f.eta = {0.3, 0.7};

    // frozen generator sample for the critic check
    const pn::PMap p = pn::lift(f.w, {});
    const ad::Var x = ad::constant(f.x);
    const ad::Var y = ad::constant(f.y);
    const auto enc = pn::encode(p, f.cfg, pn::Variant::physnet, x);
    const ad::Var sigma = ad::exp_(ad::scale(enc.logvar, 0.5));
    const ad::Var z = ad::add(enc.mu, ad::mul(sigma, ad::constant(f.noise)));
    f.o_fake = pn::generate(p, f.cfg, z, &y, enc.skips)->value;
    return f;
}

ad::Var build_gen_loss(const Fixture& f, const pn::PMap& p) {
    const ad::Var x = ad::constant(f.x);
    const ad::Var t = ad::constant(f.t);
    const ad::Var y = ad::constant(f.y);
    const auto enc = pn::encode(p, f.cfg, pn::Variant::physnet, x);
    const ad::Var sigma = ad::exp_(ad::scale(enc.logvar, 0.5));
    const ad::Var z = ad::add(enc.mu, ad::mul(sigma, ad::constant(f.noise)));
    const ad::Var o = pn::generate(p, f.cfg, z, &y, enc.skips);
    const ad::Var lvae =
        ad::add(pn::loss_ae(t, o, f.cfg.alpha), pn::loss_prior(enc.mu, enc.logvar));
    const ad::Var dfake = pn::discriminate(p, f.cfg, o, &y);
    const ad::Var lgan = ad::neg(ad::scale(ad::sum_all(dfake), 1.0 / f.batch));
    return ad::add(ad::scale(lvae, f.cfg.beta), ad::scale(lgan, 1.0 - f.cfg.beta));
}

ad::Var build_disc_loss(const Fixture& f, const pn::PMap& p) {
    const ad::Var t = ad::constant(f.t);
    const ad::Var y = ad::constant(f.y);
    const ad::Var o = ad::constant(f.o_fake);
    const double inv_b = 1.0 / f.batch;

    const ad::Var d_fake = pn::discriminate(p, f.cfg, o, &y);
    const ad::Var d_real = pn::discriminate(p, f.cfg, t, &y);

    Tensor ohat_t(f.t.shape);
    const int64_t vol = ohat_t.numel() / f.batch;
    for (int b = 0; b < f.batch; ++b)
        for (int64_t j = 0; j < vol; ++j) {
            const int64_t k = b * vol + j;
            ohat_t[k] = f.eta[static_cast<size_t>(b)] * f.t[k] +
                        (1.0 - f.eta[static_cast<size_t>(b)]) * f.o_fake[k];
        }
    const ad::Var ohat = ad::leaf(std::move(ohat_t), true);
    const ad::Var d_hat = pn::discriminate(p, f.cfg, ohat, &y);
    auto inner = ad::backward(ad::sum_all(d_hat), {ohat});
    const ad::Var g = inner.at(ohat.get());
    const ad::Var norms = ad::sqrt_(ad::sum_per_sample(ad::mul(g, g)));
    const ad::Var nm1 = ad::add_scalar(norms, -1.0);
    const ad::Var penalty = ad::scale(ad::sum_all(ad::mul(nm1, nm1)), inv_b);

    const ad::Var wdist =
        ad::sub(ad::scale(ad::sum_all(d_fake), inv_b), ad::scale(ad::sum_all(d_real), inv_b));
    return ad::add(wdist, ad::scale(penalty, f.cfg.lambda_gp));
}

Result fd_check(Fixture& f, const std::string& prefix_a, const std::string& prefix_b,
                const std::function<ad::Var(const Fixture&, const pn::PMap&)>& builder) {
    std::set<std::string> trainable;
    if (!prefix_a.empty()) trainable.insert(prefix_a);
    if (!prefix_b.empty()) trainable.insert(prefix_b);

    const pn::PMap p = pn::lift(f.w, trainable);
    const ad::Var loss = builder(f, p);
    std::vector<ad::Var> wanted;
    for (const auto& [name, var] : p)
        if (var->requires_grad) wanted.push_back(var);
    const auto gm = ad::backward(loss, wanted);

    Result res;
    const double h = 1e-5;
    for (auto& [name, tensor] : f.w.tensors) {
        const ad::Var& pvar = p.at(name);
        if (!pvar->requires_grad) continue;
        const auto git = gm.find(pvar.get());
        for (int64_t i = 0; i < tensor.numel(); ++i) {
            const double keep = tensor[i];
            tensor[i] = keep + h;
            const double fp = ad::scalar_of(builder(f, pn::lift(f.w, {})));
            tensor[i] = keep - h;
            const double fm = ad::scalar_of(builder(f, pn::lift(f.w, {})));
            tensor[i] = keep;
            const double fd = (fp - fm) / (2 * h);
            const double analytic = git == gm.end() ? 0.0 : git->second->value[i];
            const double rel =
                std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6});
            ++res.checked;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

}  // namespace

Result check_vae_terms(int n, int levels) {
    Fixture f = make_fixture(n, levels);
    Result res;
    const double h = 1e-6;

    // loss_ae w.r.t. the generator output
    Tensor o(f.t.shape);
    Rng rng(77);
    for (auto& v : o.data) v = rng.uniform(0.05, 0.95);
    {
        const ad::Var ov = ad::leaf(o, true);
        const ad::Var loss = pn::loss_ae(ad::constant(f.t), ov, f.cfg.alpha);
        const auto gm = ad::backward(loss, {ov});
        const Tensor& g = gm.at(ov.get())->value;
        for (int64_t i = 0; i < o.numel(); ++i) {
            const double keep = o[i];
            o[i] = keep + h;
            const double fp =
                ad::scalar_of(pn::loss_ae(ad::constant(f.t), ad::constant(o), f.cfg.alpha));
            o[i] = keep - h;
            const double fm =
                ad::scalar_of(pn::loss_ae(ad::constant(f.t), ad::constant(o), f.cfg.alpha));
            o[i] = keep;
            const double fd = (fp - fm) / (2 * h);
            const double rel = std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-6});
            ++res.checked;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = "loss_ae.o[" + std::to_string(i) + "]";
            }
        }
    }

    // loss_prior w.r.t. mu and logvar
    Tensor mu({2, 5}), logvar({2, 5});
    for (auto& v : mu.data) v = rng.uniform(-1, 1);
    for (auto& v : logvar.data) v = rng.uniform(-1, 1);
    {
        const ad::Var muv = ad::leaf(mu, true);
        const ad::Var lvv = ad::leaf(logvar, true);
        const auto gm = ad::backward(pn::loss_prior(muv, lvv), {muv, lvv});
        for (auto* which : {&mu, &logvar}) {
            const ad::Var& var = which == &mu ? muv : lvv;
            const Tensor& g = gm.at(var.get())->value;
            for (int64_t i = 0; i < which->numel(); ++i) {
                const double keep = (*which)[i];
                (*which)[i] = keep + h;
                const double fp =
                    ad::scalar_of(pn::loss_prior(ad::constant(mu), ad::constant(logvar)));
                (*which)[i] = keep - h;
                const double fm =
                    ad::scalar_of(pn::loss_prior(ad::constant(mu), ad::constant(logvar)));
                (*which)[i] = keep;
                const double fd = (fp - fm) / (2 * h);
                const double rel =
                    std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-6});
                ++res.checked;
                if (rel > res.max_rel_error) {
                    res.max_rel_error = rel;
                    res.worst_param = "loss_prior[" + std::to_string(i) + "]";
                }
            }
        }
    }
    return res;
}

Result check_generator_loss(int n, int levels) {
    Fixture f = make_fixture(n, levels);
    return fd_check(f, "enc.", "gen.", build_gen_loss);
}

Result check_discriminator_loss(int n, int levels) {
    Fixture f = make_fixture(n, levels);
    return fd_check(f, "disc.", "", build_disc_loss);
}

}  // namespace physvox::gradcheck
