#include "physvox/physnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

using ordered_json = nlohmann::ordered_json;
namespace ad = physvox::ad;

namespace physvox::physnet {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int ilog2(int n) {
    int l = 0;
    while ((1 << l) < n) ++l;
    return l;
}

int scaled_dim(int full_scale_dim, int n) {
    const double f = static_cast<double>(n) * n * n / (64.0 * 64.0 * 64.0);
    return std::max(64, static_cast<int>(std::lround(full_scale_dim * f)));
}

}  // namespace

void NetworkConfig::validate() const {
    if (!is_power_of_two(grid_resolution) || grid_resolution < 4)
        throw ConfigError("grid_resolution must be a power of two >= 4");
    if (conv_levels < 0) throw ConfigError("conv_levels must be >= 0");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must be in (0,1)");
    if (lambda_gp < 0.0) throw ConfigError("lambda_gp must be >= 0");
    if (condition_length < 0) throw ConfigError("condition_length must be >= 0");
    const int levels = conv_levels ? conv_levels : ilog2(grid_resolution) - 1;
    if (grid_resolution >> levels < 1) throw ConfigError("too many conv levels for resolution");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::physnet: return "physnet";
        case Variant::icgan: return "icgan";
        case Variant::reconstructor: return "reconstructor";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "physnet") return Variant::physnet;
    if (s == "icgan") return Variant::icgan;
    if (s == "reconstructor") return Variant::reconstructor;
    throw ConfigError("unknown model variant: " + s);
}

NetworkConfig resolve(NetworkConfig cfg, Variant v) {
    cfg.validate();
    const int n = cfg.grid_resolution;
    // at least 2 levels: the generator needs one deconv below the output
    if (cfg.conv_levels == 0) cfg.conv_levels = std::max(2, ilog2(n) - 1);
    if (cfg.latent_dim == 0)
        cfg.latent_dim = scaled_dim(v == Variant::physnet ? 800 : 5000, n);
    if (cfg.flatten_dim == 0) cfg.flatten_dim = scaled_dim(5000, n);
    if (cfg.critic_dense_dim == 0) cfg.critic_dense_dim = scaled_dim(32768, n);
    if (v == Variant::reconstructor) cfg.condition_length = 0;
    return cfg;
}

uint64_t fingerprint(const NetworkConfig& cfg) {
    std::ostringstream os;
    os << cfg.grid_resolution << ';' << cfg.conv_levels << ';' << cfg.base_channels << ';'
       << cfg.latent_dim << ';' << cfg.flatten_dim << ';' << cfg.critic_dense_dim << ';'
       << cfg.alpha << ';' << cfg.beta << ';' << cfg.lambda_gp << ';' << cfg.condition_length;
    const std::string s = os.str();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

int enc_channels(const NetworkConfig& cfg, int level) {
    const int c = cfg.base_channels << (level - 1);
    return std::min(c, cfg.base_channels * 8);
}

std::vector<double> reparameterize(const LatentCode& c, const std::vector<double>& noise) {
    if (noise.size() != c.mu.size()) throw DimensionError("reparameterize: noise length mismatch");
    std::vector<double> z(c.mu.size());
    for (size_t i = 0; i < z.size(); ++i) z[i] = c.mu[i] + c.sigma[i] * noise[i];
    return z;
}

namespace {

struct LayerDims {
    int levels;          // encoder conv count L
    int start_spatial;   // generator seed spatial S0 = N >> (L-1)
    int final_spatial;   // encoder output spatial N >> L
};

LayerDims layer_dims(const NetworkConfig& cfg) {
    LayerDims d;
    d.levels = cfg.conv_levels;
    d.start_spatial = cfg.grid_resolution >> (d.levels - 1);
    d.final_spatial = cfg.grid_resolution >> d.levels;
    return d;
}

void add_conv(std::map<std::string, Tensor>& t, const std::string& name, int cout, int cin,
              Rng& rng) {
    Tensor w({cout, cin, 4, 4, 4});
    const double std = std::sqrt(2.0 / (cin * 64.0));
    for (auto& v : w.data) v = rng.normal() * std;
    t[name + ".w"] = std::move(w);
    t[name + ".b"] = Tensor({cout});
}

void add_tconv(std::map<std::string, Tensor>& t, const std::string& name, int cin, int cout,
               Rng& rng) {
    Tensor w({cin, cout, 4, 4, 4});
    const double std = std::sqrt(2.0 / (cin * 64.0));
    for (auto& v : w.data) v = rng.normal() * std;
    t[name + ".w"] = std::move(w);
    t[name + ".b"] = Tensor({cout});
}

void add_fc(std::map<std::string, Tensor>& t, const std::string& name, int in, int out, Rng& rng,
            double std_scale = 1.0) {
    Tensor w({in, out});
    const double std = std_scale * std::sqrt(2.0 / in);
    for (auto& v : w.data) v = rng.normal() * std;
    t[name + ".w"] = std::move(w);
    t[name + ".b"] = Tensor({out});
}

}  // namespace

ModelWeights init_weights(const NetworkConfig& cfg_in, Variant v, uint64_t seed) {
    ModelWeights w;
    w.config = resolve(cfg_in, v);
    w.variant = v;
    const NetworkConfig& cfg = w.config;
    const LayerDims dims = layer_dims(cfg);
    Rng rng(seed ^ 0x9e11);

    // encoder
    int cin = 1;
    for (int l = 1; l <= dims.levels; ++l) {
        add_conv(w.tensors, "enc.conv" + std::to_string(l), enc_channels(cfg, l), cin, rng);
        cin = enc_channels(cfg, l);
    }
    const int flat = cin * dims.final_spatial * dims.final_spatial * dims.final_spatial;
    add_fc(w.tensors, "enc.fc", flat, cfg.flatten_dim, rng);
    if (v == Variant::physnet) {
        add_fc(w.tensors, "enc.mu", cfg.flatten_dim, cfg.latent_dim, rng);
        add_fc(w.tensors, "enc.logvar", cfg.flatten_dim, cfg.latent_dim, rng, 0.01);
    } else {
        add_fc(w.tensors, "enc.lat", cfg.flatten_dim, cfg.latent_dim, rng);
    }

    // generator
    const int c_start = enc_channels(cfg, dims.levels - 1);
    const int s0 = dims.start_spatial;
    add_fc(w.tensors, "gen.fc", cfg.latent_dim + cfg.condition_length, c_start * s0 * s0 * s0,
           rng);
    for (int j = 1; j <= dims.levels - 1; ++j) {
        const int in_ch = 2 * enc_channels(cfg, dims.levels - j);
        const int out_ch = j < dims.levels - 1 ? enc_channels(cfg, dims.levels - 1 - j) : 1;
        add_tconv(w.tensors, "gen.deconv" + std::to_string(j), in_ch, out_ch, rng);
    }

    // discriminator
    cin = 1 + cfg.condition_length;
    for (int l = 1; l <= dims.levels; ++l) {
        if (l == 3 && cfg.condition_length > 0) cin += cfg.condition_length;
        add_conv(w.tensors, "disc.conv" + std::to_string(l), enc_channels(cfg, l), cin, rng);
        cin = enc_channels(cfg, l);
    }
    add_fc(w.tensors, "disc.fc", cin * dims.final_spatial * dims.final_spatial * dims.final_spatial,
           cfg.critic_dense_dim, rng);
    return w;
}

void quantize_f32(ModelWeights& w) {
    for (auto& [name, t] : w.tensors)
        for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

PMap lift(const ModelWeights& w, const std::set<std::string>& trainable) {
    PMap p;
    for (const auto& [name, t] : w.tensors) {
        bool rg = false;
        for (const auto& pre : trainable)
            if (name.rfind(pre, 0) == 0) {
                rg = true;
                break;
            }
        p[name] = ad::leaf(t, rg);
    }
    return p;
}

namespace {

ad::Var conv_layer(const PMap& p, const std::string& name, const ad::Var& x, bool sigmoid_act) {
    const ad::Var z =
        ad::add_channel_bias(ad::conv3d(x, p.at(name + ".w"), 2, 1), p.at(name + ".b"));
    return sigmoid_act ? ad::sigmoid(z) : ad::relu(z);
}

ad::Var fc_layer(const PMap& p, const std::string& name, const ad::Var& x) {
    return ad::add_channel_bias(ad::matmul(x, p.at(name + ".w")), p.at(name + ".b"));
}

}  // namespace

EncoderOut encode(const PMap& p, const NetworkConfig& cfg, Variant v, const ad::Var& x) {
    const LayerDims dims = layer_dims(cfg);
    if (x->value.dim(2) != cfg.grid_resolution)
        throw DimensionError("encode: input resolution mismatch");
    EncoderOut out;
    ad::Var h = x;
    for (int l = 1; l <= dims.levels; ++l) {
        h = conv_layer(p, "enc.conv" + std::to_string(l), h, l == dims.levels);
        if (l < dims.levels) out.skips.push_back(h);
    }
    const int b = h->value.dim(0);
    h = ad::reshape(h, {b, static_cast<int>(h->value.numel() / b)});
    h = ad::relu(fc_layer(p, "enc.fc", h));
    if (v == Variant::physnet) {
        out.mu = fc_layer(p, "enc.mu", h);
        out.logvar = fc_layer(p, "enc.logvar", h);
    } else {
        out.latent = fc_layer(p, "enc.lat", h);
        out.mu = out.latent;
    }
    return out;
}

ad::Var generate(const PMap& p, const NetworkConfig& cfg, const ad::Var& z, const ad::Var* y,
                 const std::vector<ad::Var>& skips) {
    const LayerDims dims = layer_dims(cfg);
    if (static_cast<int>(skips.size()) != dims.levels - 1)
        throw DimensionError("generate: wrong skip count");
    ad::Var zin = z;
    if (cfg.condition_length > 0) {
        if (!y) throw DimensionError("generate: condition required");
        if ((*y)->value.dim(1) != cfg.condition_length)
            throw DimensionError("generate: condition length mismatch");
        zin = ad::concat_ch(z, *y);
    }
    const int b = zin->value.dim(0);
    const int c_start = enc_channels(cfg, dims.levels - 1);
    const int s0 = dims.start_spatial;
    ad::Var h = ad::relu(fc_layer(p, "gen.fc", zin));
    h = ad::reshape(h, {b, c_start, s0, s0, s0});
    for (int j = 1; j <= dims.levels - 1; ++j) {
        // skip at the matching spatial size: encoder level L-j output
        h = ad::concat_ch(h, skips[static_cast<size_t>(dims.levels - 1 - j)]);
        const std::string name = "gen.deconv" + std::to_string(j);
        h = ad::add_channel_bias(ad::tconv3d(h, p.at(name + ".w"), 2, 1), p.at(name + ".b"));
        h = j < dims.levels - 1 ? ad::relu(h) : ad::sigmoid(h);
    }
    return h;
}

ad::Var discriminate(const PMap& p, const NetworkConfig& cfg, const ad::Var& grid,
                     const ad::Var* y) {
    const LayerDims dims = layer_dims(cfg);
    if (grid->value.dim(2) != cfg.grid_resolution)
        throw DimensionError("discriminate: input resolution mismatch");
    ad::Var h = grid;
    if (cfg.condition_length > 0) {
        if (!y) throw DimensionError("discriminate: condition required");
        h = ad::concat_ch(grid, ad::bcast_spatial(*y, grid->value.dim(2), grid->value.dim(3),
                                                  grid->value.dim(4)));
    }
    for (int l = 1; l <= dims.levels; ++l) {
        if (l == 3 && cfg.condition_length > 0)
            h = ad::concat_ch(
                h, ad::bcast_spatial(*y, h->value.dim(2), h->value.dim(3), h->value.dim(4)));
        h = conv_layer(p, "disc.conv" + std::to_string(l), h, l == dims.levels);
    }
    const int b = h->value.dim(0);
    h = ad::reshape(h, {b, static_cast<int>(h->value.numel() / b)});
    h = fc_layer(p, "disc.fc", h);  // dense similarity vector, no activation
    return ad::scale(ad::sum_per_sample(h), 1.0 / cfg.critic_dense_dim);
}

ad::Var loss_ae(const ad::Var& target, const ad::Var& out, double alpha) {
    if (!target->value.same_shape(out->value)) throw DimensionError("loss_ae: shape mismatch");
    const ad::Var o = ad::clamp(out, 1e-7, 1.0 - 1e-7);
    const ad::Var t = target;
    const ad::Var pos = ad::scale(ad::mul(t, ad::log_(o)), -alpha);
    const ad::Var neg_t = ad::add_scalar(ad::neg(t), 1.0);
    const ad::Var neg_o = ad::log_(ad::add_scalar(ad::neg(o), 1.0));
    const ad::Var neg = ad::scale(ad::mul(neg_t, neg_o), -(1.0 - alpha));
    return ad::mean_all(ad::add(pos, neg));
}

ad::Var loss_prior(const ad::Var& mu, const ad::Var& logvar) {
    // -1/2 sum(1 + logvar - mu^2 - exp(logvar)) per sample, batch mean
    const ad::Var inner = ad::sub(ad::sub(ad::add_scalar(logvar, 1.0), ad::mul(mu, mu)),
                                  ad::exp_(logvar));
    const int b = mu->value.dim(0);
    return ad::scale(ad::sum_all(inner), -0.5 / b);
}

double loss_ae_value(const voxel::VoxelGrid& target, const voxel::VoxelGrid& out, double alpha) {
    const ad::Var t = ad::constant(grid_to_tensor(target));
    const ad::Var o = ad::constant(grid_to_tensor(out));
    return ad::scalar_of(loss_ae(t, o, alpha));
}

double loss_prior_value(const LatentCode& c) {
    const int n = static_cast<int>(c.mu.size());
    Tensor mu({1, n}), logvar({1, n});
    for (int i = 0; i < n; ++i) {
        mu[i] = c.mu[static_cast<size_t>(i)];
        logvar[i] = 2.0 * std::log(c.sigma[static_cast<size_t>(i)]);
    }
    return ad::scalar_of(loss_prior(ad::constant(mu), ad::constant(logvar)));
}

Tensor grid_to_tensor(const voxel::VoxelGrid& g) {
    Tensor t({1, 1, g.resolution, g.resolution, g.resolution});
    std::copy(g.values.begin(), g.values.end(), t.data.begin());
    return t;
}

voxel::VoxelGrid tensor_to_grid(const Tensor& t, double spacing) {
    const int n = t.dim(t.ndim() - 1);
    voxel::VoxelGrid g(n, spacing, voxel::GridKind::probabilistic);
    std::copy(t.data.begin(), t.data.end(), g.values.begin());
    return g;
}

voxel::VoxelGrid predict(const ModelWeights& w, const voxel::VoxelGrid& x,
                         const dataset::ConditionVector& y, bool deterministic, Rng* rng) {
    const NetworkConfig& cfg = w.config;
    if (x.resolution != cfg.grid_resolution)
        throw DimensionError("predict: input resolution mismatch");
    if (cfg.condition_length > 0 && y.length() != cfg.condition_length)
        throw DimensionError("predict: condition length mismatch");
    const PMap p = lift(w, {});
    const ad::Var xin = ad::constant(grid_to_tensor(x));
    const EncoderOut enc = encode(p, cfg, w.variant, xin);

    ad::Var z = enc.mu;
    if (w.variant == Variant::physnet && !deterministic) {
        if (!rng) throw ParameterError("predict: stochastic mode needs an RNG");
        Tensor noise({1, cfg.latent_dim});
        for (auto& v : noise.data) v = rng->normal();
        const ad::Var sigma = ad::exp_(ad::scale(enc.logvar, 0.5));
        z = ad::add(enc.mu, ad::mul(sigma, ad::constant(noise)));
    }
    ad::Var yv;
    const ad::Var* yp = nullptr;
    if (cfg.condition_length > 0) {
        Tensor yt({1, cfg.condition_length});
        std::copy(y.values.begin(), y.values.end(), yt.data.begin());
        yv = ad::constant(yt);
        yp = &yv;
    }
    const ad::Var out = generate(p, cfg, z, yp, enc.skips);
    return tensor_to_grid(out->value, x.spacing);
}

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("unexpected end of checkpoint");
    return v;
}

ordered_json config_to_json(const NetworkConfig& c) {
    ordered_json j;
    j["grid_resolution"] = c.grid_resolution;
    j["conv_levels"] = c.conv_levels;
    j["base_channels"] = c.base_channels;
    j["latent_dim"] = c.latent_dim;
    j["flatten_dim"] = c.flatten_dim;
    j["critic_dense_dim"] = c.critic_dense_dim;
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["lambda_gp"] = c.lambda_gp;
    j["condition_length"] = c.condition_length;
    return j;
}

NetworkConfig config_from_json(const ordered_json& j) {
    NetworkConfig c;
    c.grid_resolution = j.at("grid_resolution").get<int>();
    c.conv_levels = j.at("conv_levels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.flatten_dim = j.at("flatten_dim").get<int>();
    c.critic_dense_dim = j.at("critic_dense_dim").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.lambda_gp = j.at("lambda_gp").get<double>();
    c.condition_length = j.at("condition_length").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const ModelWeights& w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    os.write("PVW1", 4);
    write_raw<uint32_t>(os, 1u);
    write_raw<uint64_t>(os, fingerprint(w.config));
    write_raw<uint8_t>(os, static_cast<uint8_t>(w.variant));
    write_raw<uint8_t>(os, static_cast<uint8_t>(w.encoding));
    write_raw<uint16_t>(os, static_cast<uint16_t>(w.location_count));
    write_raw<float>(os, static_cast<float>(w.f_max));
    const std::string cj = config_to_json(w.config).dump();
    write_raw<uint32_t>(os, static_cast<uint32_t>(cj.size()));
    os.write(cj.data(), static_cast<std::streamsize>(cj.size()));
    write_raw<uint32_t>(os, static_cast<uint32_t>(w.tensors.size()));
    for (const auto& [name, t] : w.tensors) {
        write_raw<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
        for (int d : t.shape) write_raw<uint32_t>(os, static_cast<uint32_t>(d));
        for (double v : t.data) write_raw<float>(os, static_cast<float>(v));
    }
}

ModelWeights load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PVW1", 4) != 0) throw FormatError("bad magic: expected PVW1");
    const auto version = read_raw<uint32_t>(is);
    if (version != 1u) throw FormatError("unsupported checkpoint version");
    const auto fp = read_raw<uint64_t>(is);
    ModelWeights w;
    w.variant = static_cast<Variant>(read_raw<uint8_t>(is));
    w.encoding = static_cast<dataset::EncodingMode>(read_raw<uint8_t>(is));
    w.location_count = read_raw<uint16_t>(is);
    w.f_max = read_raw<float>(is);
    const auto clen = read_raw<uint32_t>(is);
    std::string cj(clen, '\0');
    is.read(cj.data(), clen);
    w.config = config_from_json(ordered_json::parse(cj));
    if (fingerprint(w.config) != fp)
        throw FormatError("checkpoint fingerprint does not match its config");
    const auto ntensors = read_raw<uint32_t>(is);
    for (uint32_t i = 0; i < ntensors; ++i) {
        const auto nlen = read_raw<uint16_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const auto ndim = read_raw<uint8_t>(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_raw<uint32_t>(is));
        Tensor t(shape);
        for (auto& v : t.data) v = read_raw<float>(is);
        w.tensors[name] = std::move(t);
    }
    return w;
}

}  // namespace physvox::physnet
