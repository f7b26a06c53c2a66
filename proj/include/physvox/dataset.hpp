#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "physvox/elastic.hpp"
#include "physvox/voxel.hpp"

namespace physvox::dataset {

enum class EncodingMode : uint8_t { real = 0, one_hot = 1 };

// Normalized condition y: [e_scaled, nu_scaled, force_scaled, location...].
struct ConditionVector {
    std::vector<double> values;
    EncodingMode mode = EncodingMode::real;
    int location_count = 1;
    int length() const { return static_cast<int>(values.size()); }
    double e_scaled() const { return values[0]; }
    double nu_scaled() const { return values[1]; }
    double force_scaled() const { return values[2]; }
};

ConditionVector encode_condition(const elastic::MaterialParams& m, const elastic::ForceSpec& f,
                                 double f_max, EncodingMode mode, int location_count);

struct DecodedCondition {
    elastic::MaterialParams material;
    double force = 0.0;
    int location_index = 0;
};
DecodedCondition decode_condition(const ConditionVector& y, double f_max);

struct SamplingPlan {
    int e_count = 20;               // log-uniform over [1e-5, 23] GPa
    int nu_count = 20;              // linear over [0, 0.4995]; count 1 pins nu = 0.3
    int force_count = 1;            // linspace(0, f_max); count 1 pins f_max
    int location_count = 1;
    int scale_samples_per_axis = 1;  // linear in [0.5, 1.5] per axis, Cartesian
    int rotations_per_axis = 1;      // partial mode only
    bool midpoint_offset = false;    // sample at bin midpoints (interior eval sets)
    void validate() const;
};

std::vector<elastic::MaterialParams> sample_materials(const SamplingPlan& plan);
std::vector<std::array<double, 3>> sample_scales(const SamplingPlan& plan);

enum class PrimitiveKind { bridge, beam, block, cylinder, custom };
PrimitiveKind primitive_from_string(const std::string& s);

voxel::VoxelGrid build_primitive(PrimitiveKind kind, const std::array<double, 3>& scale,
                                 int resolution, double spacing);

enum class InputKind : uint8_t { full3d = 0, partial = 1, reconstructed = 2 };

struct RecordMeta {
    std::string object_id;
    double e_gpa = 0, nu = 0, force = 0, f_max = 0;
    int location_index = 0;
    std::array<double, 3> scale{1, 1, 1};
    std::array<double, 3> euler{0, 0, 0};
    uint64_t seed = 0;
};

struct SampleRecord {
    InputKind input_kind = InputKind::full3d;
    voxel::VoxelGrid input_grid;
    voxel::VoxelGrid target_grid;
    ConditionVector condition;
    RecordMeta meta;
};

struct ManifestEntry {
    uint64_t id = 0;
    std::string file;
    int64_t offset = 0;  // cumulative byte offset over the record files
    int64_t bytes = 0;
    std::string split;   // train | validation | test
};

struct DatasetManifest {
    int format_version = 1;
    uint64_t seed = 0;
    SamplingPlan plan;
    std::string mode;  // full3d | partial
    int resolution = 0;
    double spacing = 0;
    EncodingMode encoding = EncodingMode::real;
    int64_t record_count = 0;
    int64_t skip_count = 0;
    std::vector<ManifestEntry> records;
    std::string root_dir;  // set on load

    std::vector<int> split_indices(const std::string& split) const;  // "all" for everything
};

struct ObjectSpec {
    std::string id;
    PrimitiveKind kind = PrimitiveKind::block;
    std::string path;  // VXG1 file for custom shapes
};

struct GenerateConfig {
    SamplingPlan plan;
    std::vector<ObjectSpec> objects;
    std::string mode = "full3d";
    int resolution = 16;
    double spacing = 0.0;  // 0 = 1/resolution
    EncodingMode encoding = EncodingMode::real;
    uint64_t seed = 1;
    bool overwrite = false;
};

// Runs the FEM over the sampling plan and writes records/NNNNNNNN.rec plus
// manifest.json under out_dir. Fully deterministic for a fixed seed.
DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& dir);
SampleRecord load_record(const DatasetManifest& m, int index);
void write_record(const SampleRecord& r, std::ostream& os);
SampleRecord read_record(std::istream& is);

}  // namespace physvox::dataset
