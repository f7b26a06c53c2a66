#include "physvox/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "physvox/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace physvox::dataset {

namespace {

const double kLnEmin = std::log(elastic::kEminGpa);
const double kLnEmax = std::log(elastic::kEmaxGpa);

std::vector<double> positions(int count, bool midpoint_offset) {
    std::vector<double> t;
    t.reserve(static_cast<size_t>(count));
    if (midpoint_offset) {
        for (int i = 0; i < count; ++i) t.push_back((i + 0.5) / count);
    } else if (count == 1) {
        t.push_back(0.5);
    } else {
        for (int i = 0; i < count; ++i) t.push_back(static_cast<double>(i) / (count - 1));
    }
    return t;
}

}  // namespace

ConditionVector encode_condition(const elastic::MaterialParams& m, const elastic::ForceSpec& f,
                                 double f_max, EncodingMode mode, int location_count) {
    m.validate();
    f.validate();
    if (location_count < 1) throw ParameterError("encode_condition: location_count < 1");
    if (!(f_max > 0.0)) throw ParameterError("encode_condition: f_max must be positive");
    if (f.magnitude > f_max * (1 + 1e-12))
        throw ParameterError("encode_condition: force exceeds f_max");
    if (f.location_index < 0 || f.location_index >= location_count)
        throw ParameterError("encode_condition: location index out of range");

    ConditionVector y;
    y.mode = mode;
    y.location_count = location_count;
    y.values.push_back((std::log(m.youngs_modulus_gpa) - kLnEmin) / (kLnEmax - kLnEmin));
    y.values.push_back(m.poissons_ratio / 0.5);
    y.values.push_back(f.magnitude / f_max);
    if (mode == EncodingMode::real) {
        y.values.push_back(location_count == 1
                               ? 0.0
                               : static_cast<double>(f.location_index) / (location_count - 1));
    } else {
        for (int i = 0; i < location_count; ++i)
            y.values.push_back(i == f.location_index ? 1.0 : 0.0);
    }
    return y;
}

DecodedCondition decode_condition(const ConditionVector& y, double f_max) {
    DecodedCondition d;
    d.material.youngs_modulus_gpa = std::exp(kLnEmin + y.e_scaled() * (kLnEmax - kLnEmin));
    d.material.poissons_ratio = y.nu_scaled() * 0.5;
    d.force = y.force_scaled() * f_max;
    if (y.mode == EncodingMode::real) {
        d.location_index = y.location_count == 1
                               ? 0
                               : static_cast<int>(std::lround(y.values[3] * (y.location_count - 1)));
    } else {
        int best = 0;
        for (int i = 0; i < y.location_count; ++i)
            if (y.values[static_cast<size_t>(3 + i)] > y.values[static_cast<size_t>(3 + best)])
                best = i;
        d.location_index = best;
    }
    return d;
}

void SamplingPlan::validate() const {
    if (e_count < 1 || nu_count < 1 || force_count < 1 || location_count < 1 ||
        scale_samples_per_axis < 1 || rotations_per_axis < 1)
        throw ParameterError("sampling plan: all counts must be >= 1");
}

std::vector<elastic::MaterialParams> sample_materials(const SamplingPlan& plan) {
    plan.validate();
    std::vector<double> es;
    if (plan.e_count == 1 && !plan.midpoint_offset) {
        es.push_back(std::exp(0.5 * (kLnEmin + kLnEmax)));
    } else {
        for (double t : positions(plan.e_count, plan.midpoint_offset))
            es.push_back(std::clamp(std::exp(kLnEmin + t * (kLnEmax - kLnEmin)),
                                    elastic::kEminGpa, elastic::kEmaxGpa));
    }
    std::vector<double> nus;
    if (plan.nu_count == 1 && !plan.midpoint_offset) {
        nus.push_back(0.3);  // constant-nu plans (1xN) pin nu mid-range
    } else {
        for (double t : positions(plan.nu_count, plan.midpoint_offset))
            nus.push_back(t * elastic::kNuMax);
    }
    std::vector<elastic::MaterialParams> out;
    out.reserve(es.size() * nus.size());
    for (double e : es)
        for (double nu : nus) out.push_back({e, nu});
    return out;
}

std::vector<std::array<double, 3>> sample_scales(const SamplingPlan& plan) {
    plan.validate();
    std::vector<double> s;
    if (plan.scale_samples_per_axis == 1) {
        s.push_back(1.0);
    } else {
        for (double t : positions(plan.scale_samples_per_axis, plan.midpoint_offset))
            s.push_back(0.5 + t);  // linear in [0.5, 1.5]
    }
    std::vector<std::array<double, 3>> out;
    for (double sx : s)
        for (double sy : s)
            for (double sz : s) out.push_back({sx, sy, sz});
    return out;
}

PrimitiveKind primitive_from_string(const std::string& s) {
    if (s == "bridge") return PrimitiveKind::bridge;
    if (s == "beam") return PrimitiveKind::beam;
    if (s == "block") return PrimitiveKind::block;
    if (s == "cylinder") return PrimitiveKind::cylinder;
    if (s == "custom") return PrimitiveKind::custom;
    throw ParameterError("unknown primitive kind: " + s);
}

namespace {

struct Extent {
    double lo, hi;
};

void check_extent(const Extent& e, int n, const char* what) {
    if (e.lo < -0.5 - 1e-9 || e.hi > n - 0.5 + 1e-9)
        throw ParameterError(std::string("primitive exceeds grid along ") + what);
}

}  // namespace

voxel::VoxelGrid build_primitive(PrimitiveKind kind, const std::array<double, 3>& scale,
                                 int resolution, double spacing) {
    if (kind == PrimitiveKind::custom)
        throw ParameterError("custom primitives are file-based; pass a VXG1 path instead");
    for (double s : scale)
        if (!(s > 0.0)) throw ParameterError("stretch factors must be positive");
    const int n = resolution;
    const double c = (n - 1) / 2.0;
    const double sx = scale[0], sy = scale[1], sz = scale[2];
    voxel::VoxelGrid g(n, spacing, voxel::GridKind::binary);

    // Continuous predicates over cell centres; z is stretched about the ground.
    auto box = [&](double hx, double hy, double zlo, double zhi) {
        check_extent({c - hx, c + hx}, n, "x");
        check_extent({c - hy, c + hy}, n, "y");
        check_extent({zlo - 0.5, zhi + 0.5}, n, "z");
        for (int z = std::max(0, static_cast<int>(std::ceil(zlo))); z <= std::min(n - 1, static_cast<int>(std::floor(zhi))); ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    if (std::abs(x - c) <= hx && std::abs(y - c) <= hy) g.set(x, y, z, 1.0);
    };

    switch (kind) {
        case PrimitiveKind::block:
            box(0.25 * n * sx, 0.25 * n * sy, 0.0, 0.5 * n * sz - 1.0);
            break;
        case PrimitiveKind::beam:
            box(0.25 * n * sx, 0.1 * n * sy, 0.0, 0.2 * n * sz - 1.0);
            break;
        case PrimitiveKind::cylinder: {
            const double rx = 0.2 * n * sx, ry = 0.2 * n * sy;
            const double ztop = 0.5 * n * sz - 1.0;
            check_extent({c - rx, c + rx}, n, "x");
            check_extent({c - ry, c + ry}, n, "y");
            check_extent({-0.5, ztop + 0.5}, n, "z");
            for (int z = 0; z <= std::min(n - 1, static_cast<int>(std::floor(ztop))); ++z)
                for (int y = 0; y < n; ++y)
                    for (int x = 0; x < n; ++x) {
                        const double dx = (x - c) / rx, dy = (y - c) / ry;
                        if (dx * dx + dy * dy <= 1.0) g.set(x, y, z, 1.0);
                    }
            break;
        }
        case PrimitiveKind::bridge: {
            const double deck_hx = 0.3 * n * sx, deck_hy = 0.125 * n * sy;
            const double pillar_h = 0.3 * n * sz;          // pillar top (continuous z)
            const double deck_top = 0.475 * n * sz;
            const double pillar_hx = 0.075 * n * sx;
            const double px1 = c - (deck_hx - pillar_hx);
            const double px2 = c + (deck_hx - pillar_hx);
            check_extent({c - deck_hx, c + deck_hx}, n, "x");
            check_extent({c - deck_hy, c + deck_hy}, n, "y");
            check_extent({-0.5, deck_top + 0.5}, n, "z");
            for (int z = 0; z < n; ++z)
                for (int y = 0; y < n; ++y)
                    for (int x = 0; x < n; ++x) {
                        if (std::abs(y - c) > deck_hy) continue;
                        const bool in_deck = z >= pillar_h - 1.0 && z <= deck_top &&
                                             std::abs(x - c) <= deck_hx;
                        const bool in_pillar =
                            z < pillar_h &&
                            (std::abs(x - px1) <= pillar_hx || std::abs(x - px2) <= pillar_hx);
                        if (in_deck || in_pillar) g.set(x, y, z, 1.0);
                    }
            break;
        }
        case PrimitiveKind::custom:
            break;
    }
    if (g.occupied_count() == 0) throw ParameterError("primitive rasterized to an empty grid");
    return g;
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
    if (!is) throw FormatError("unexpected end of record");
    return v;
}

ordered_json meta_to_json(const RecordMeta& m) {
    ordered_json j;
    j["object_id"] = m.object_id;
    j["e_gpa"] = m.e_gpa;
    j["nu"] = m.nu;
    j["force"] = m.force;
    j["f_max"] = m.f_max;
    j["location_index"] = m.location_index;
    j["scale"] = m.scale;
    j["euler"] = m.euler;
    j["seed"] = m.seed;
    return j;
}

RecordMeta meta_from_json(const ordered_json& j) {
    RecordMeta m;
    m.object_id = j.at("object_id").get<std::string>();
    m.e_gpa = j.at("e_gpa").get<double>();
    m.nu = j.at("nu").get<double>();
    m.force = j.at("force").get<double>();
    m.f_max = j.at("f_max").get<double>();
    m.location_index = j.at("location_index").get<int>();
    const auto s = j.at("scale").get<std::vector<double>>();
    const auto e = j.at("euler").get<std::vector<double>>();
    for (int i = 0; i < 3; ++i) {
        m.scale[static_cast<size_t>(i)] = s[static_cast<size_t>(i)];
        m.euler[static_cast<size_t>(i)] = e[static_cast<size_t>(i)];
    }
    m.seed = j.at("seed").get<uint64_t>();
    return m;
}

}  // namespace

void write_record(const SampleRecord& r, std::ostream& os) {
    write_raw<uint32_t>(os, 1u);
    write_raw<uint8_t>(os, static_cast<uint8_t>(r.input_kind));
    voxel::write_grid(r.input_grid, os);
    voxel::write_grid(r.target_grid, os);
    write_raw<uint16_t>(os, static_cast<uint16_t>(r.condition.values.size()));
    for (double v : r.condition.values) write_raw<float>(os, static_cast<float>(v));
    write_raw<uint8_t>(os, static_cast<uint8_t>(r.condition.mode));
    write_raw<uint16_t>(os, static_cast<uint16_t>(r.condition.location_count));
    const std::string meta = meta_to_json(r.meta).dump();
    write_raw<uint32_t>(os, static_cast<uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
}

SampleRecord read_record(std::istream& is) {
    SampleRecord r;
    const auto version = read_raw<uint32_t>(is);
    if (version != 1u) throw FormatError("unsupported record version");
    r.input_kind = static_cast<InputKind>(read_raw<uint8_t>(is));
    r.input_grid = voxel::read_grid(is);
    r.target_grid = voxel::read_grid(is);
    const auto clen = read_raw<uint16_t>(is);
    r.condition.values.resize(clen);
    for (auto& v : r.condition.values) v = read_raw<float>(is);
    r.condition.mode = static_cast<EncodingMode>(read_raw<uint8_t>(is));
    r.condition.location_count = read_raw<uint16_t>(is);
    const auto mlen = read_raw<uint32_t>(is);
    std::string meta(mlen, '\0');
    is.read(meta.data(), mlen);
    if (!is) throw FormatError("truncated record metadata");
    r.meta = meta_from_json(ordered_json::parse(meta));
    return r;
}

namespace {

ordered_json plan_to_json(const SamplingPlan& p) {
    ordered_json j;
    j["e_count"] = p.e_count;
    j["nu_count"] = p.nu_count;
    j["force_count"] = p.force_count;
    j["location_count"] = p.location_count;
    j["scale_samples_per_axis"] = p.scale_samples_per_axis;
    j["rotations_per_axis"] = p.rotations_per_axis;
    j["midpoint_offset"] = p.midpoint_offset;
    return j;
}

SamplingPlan plan_from_json(const ordered_json& j) {
    SamplingPlan p;
    p.e_count = j.at("e_count").get<int>();
    p.nu_count = j.at("nu_count").get<int>();
    p.force_count = j.at("force_count").get<int>();
    p.location_count = j.at("location_count").get<int>();
    p.scale_samples_per_axis = j.at("scale_samples_per_axis").get<int>();
    p.rotations_per_axis = j.at("rotations_per_axis").get<int>();
    p.midpoint_offset = j.at("midpoint_offset").get<bool>();
    return p;
}

std::string record_filename(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%08lld.rec", static_cast<long long>(index));
    return std::string("records/") + buf;
}

}  // namespace

std::vector<int> DatasetManifest::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (split == "all" || records[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::string& out_dir) {
    cfg.plan.validate();
    if (cfg.objects.empty()) throw ParameterError("generate_dataset: no objects given");
    if (cfg.mode != "full3d" && cfg.mode != "partial")
        throw ParameterError("generate_dataset: mode must be full3d or partial");
    const double spacing = cfg.spacing > 0 ? cfg.spacing : 1.0 / cfg.resolution;

    const fs::path root(out_dir);
    if (fs::exists(root / "manifest.json") && !cfg.overwrite)
        throw GenerationError("dataset already exists at " + out_dir +
                              " (use overwrite to replace)");
    fs::create_directories(root / "records");

    const auto materials = sample_materials(cfg.plan);
    const auto scales = sample_scales(cfg.plan);
    const auto poses = cfg.mode == "partial"
                           ? voxel::enumerate_rotations(cfg.plan.rotations_per_axis)
                           : std::vector<voxel::CameraPose>{{}};

    DatasetManifest man;
    man.seed = cfg.seed;
    man.plan = cfg.plan;
    man.mode = cfg.mode;
    man.resolution = cfg.resolution;
    man.spacing = spacing;
    man.encoding = cfg.encoding;
    man.root_dir = out_dir;

    // Softest sampled material drives the per-object force calibration.
    elastic::MaterialParams softest = materials.front();
    for (const auto& m : materials)
        if (m.youngs_modulus_gpa < softest.youngs_modulus_gpa ||
            (m.youngs_modulus_gpa == softest.youngs_modulus_gpa &&
             m.poissons_ratio < softest.poissons_ratio))
            softest = m;

    int64_t index = 0, skipped = 0, attempted = 0, offset = 0;
    const std::array<double, 3> down{0.0, 0.0, -1.0};

    for (const auto& obj : cfg.objects) {
        for (const auto& scl : scales) {
            voxel::VoxelGrid base =
                obj.kind == PrimitiveKind::custom
                    ? voxel::load_grid(obj.path)
                    : build_primitive(obj.kind, scl, cfg.resolution, spacing);
            elastic::HexMesh mesh = elastic::build_hex_mesh(base, cfg.plan.location_count);
            const int mid_site = cfg.plan.location_count / 2;
            const double f_max =
                elastic::calibrate_force_max(mesh, softest, mid_site, down);
            std::vector<double> forces;
            if (cfg.plan.force_count == 1)
                forces.push_back(f_max);
            else
                for (int i = 0; i < cfg.plan.force_count; ++i)
                    forces.push_back(f_max * i / (cfg.plan.force_count - 1));

            for (const auto& mat : materials)
                for (double force : forces)
                    for (int loc = 0; loc < cfg.plan.location_count; ++loc) {
                        ++attempted;
                        voxel::VoxelGrid target;
                        try {
                            if (force == 0.0) {
                                target = base;
                            } else {
                                elastic::ForceSpec fs_{force, loc, down};
                                const auto u = elastic::solve_displacement(mesh, mat, fs_);
                                target = elastic::deform_and_revoxelize(mesh, u, cfg.resolution,
                                                                        spacing);
                            }
                        } catch (const std::exception& e) {
                            ++skipped;
                            std::cerr << "warning: record skipped (" << e.what() << ")\n";
                            continue;
                        }
                        const auto cond = encode_condition(mat, {force, loc, down}, f_max,
                                                           cfg.encoding, cfg.plan.location_count);
                        for (const auto& pose : poses) {
                            SampleRecord rec;
                            rec.condition = cond;
                            rec.meta = {obj.id,  mat.youngs_modulus_gpa,
                                        mat.poissons_ratio, force, f_max, loc, scl,
                                        pose.euler, Rng::mix(cfg.seed, static_cast<uint64_t>(index))};
                            if (cfg.mode == "partial") {
                                rec.input_kind = InputKind::partial;
                                rec.input_grid = voxel::depth_to_partial_grid(
                                    voxel::render_depth(base, pose), cfg.resolution);
                                rec.target_grid = voxel::rotate_grid(target, pose);
                            } else {
                                rec.input_kind = InputKind::full3d;
                                rec.input_grid = base;
                                rec.target_grid = target;
                            }
                            const std::string fname = record_filename(index);
                            std::ostringstream buf;
                            write_record(rec, buf);
                            const std::string bytes = buf.str();
                            std::ofstream os(root / fname, std::ios::binary);
                            os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
                            man.records.push_back({static_cast<uint64_t>(index), fname, offset,
                                                   static_cast<int64_t>(bytes.size()), ""});
                            offset += static_cast<int64_t>(bytes.size());
                            ++index;
                        }
                    }
        }
    }

    if (attempted > 0 && skipped * 20 > attempted)
        throw GenerationError("more than 5% of records failed to generate");
    man.record_count = index;
    man.skip_count = skipped;

    // 80/10/10 split by record-hash rank.
    std::vector<size_t> order(man.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<uint64_t> hashes(man.records.size());
    for (size_t i = 0; i < hashes.size(); ++i) hashes[i] = Rng::mix(cfg.seed ^ 0xda7a5e7, i);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return hashes[a] < hashes[b]; });
    const auto ntotal = static_cast<int64_t>(order.size());
    const int64_t ntrain = ntotal * 8 / 10;
    const int64_t nval = ntotal / 10;
    for (int64_t i = 0; i < ntotal; ++i) {
        auto& e = man.records[order[static_cast<size_t>(i)]];
        e.split = i < ntrain ? "train" : (i < ntrain + nval ? "validation" : "test");
    }

    ordered_json j;
    j["format_version"] = man.format_version;
    j["seed"] = man.seed;
    j["plan"] = plan_to_json(man.plan);
    j["mode"] = man.mode;
    j["resolution"] = man.resolution;
    j["spacing"] = man.spacing;
    j["encoding"] = man.encoding == EncodingMode::real ? "real" : "one_hot";
    j["record_count"] = man.record_count;
    j["skip_count"] = man.skip_count;
    ordered_json recs = ordered_json::array();
    for (const auto& e : man.records) {
        ordered_json r;
        r["id"] = e.id;
        r["file"] = e.file;
        r["offset"] = e.offset;
        r["bytes"] = e.bytes;
        r["split"] = e.split;
        recs.push_back(r);
    }
    j["records"] = recs;
    std::ofstream os(root / "manifest.json");
    os << j.dump(2) << "\n";
    return man;
}

DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw FormatError("cannot open manifest.json in " + dir);
    ordered_json j;
    is >> j;
    DatasetManifest man;
    man.format_version = j.at("format_version").get<int>();
    man.seed = j.at("seed").get<uint64_t>();
    man.plan = plan_from_json(j.at("plan"));
    man.mode = j.at("mode").get<std::string>();
    man.resolution = j.at("resolution").get<int>();
    man.spacing = j.at("spacing").get<double>();
    man.encoding =
        j.at("encoding").get<std::string>() == "real" ? EncodingMode::real : EncodingMode::one_hot;
    man.record_count = j.at("record_count").get<int64_t>();
    man.skip_count = j.at("skip_count").get<int64_t>();
    int64_t prev_offset = -1;
    for (const auto& r : j.at("records")) {
        ManifestEntry e;
        e.id = r.at("id").get<uint64_t>();
        e.file = r.at("file").get<std::string>();
        e.offset = r.at("offset").get<int64_t>();
        e.bytes = r.at("bytes").get<int64_t>();
        e.split = r.at("split").get<std::string>();
        if (e.offset <= prev_offset) throw FormatError("manifest offsets not strictly increasing");
        prev_offset = e.offset;
        man.records.push_back(e);
    }
    man.root_dir = dir;
    return man;
}

SampleRecord load_record(const DatasetManifest& m, int index) {
    if (index < 0 || index >= static_cast<int>(m.records.size()))
        throw ParameterError("record index out of range");
    std::ifstream is(fs::path(m.root_dir) / m.records[static_cast<size_t>(index)].file,
                     std::ios::binary);
    if (!is) throw FormatError("cannot open record file");
    return read_record(is);
}

}  // namespace physvox::dataset
