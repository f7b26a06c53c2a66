#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "physvox/errors.hpp"

namespace physvox::voxel {

enum class GridKind : uint8_t { binary = 0, probabilistic = 1 };

// N^3 occupancy grid. Values are indexed as (x, y, z) with x fastest:
// flat = (z*N + y)*N + x. z = 0 is the ground plane.
struct VoxelGrid {
    int resolution = 0;     // cells per axis, power of two
    double spacing = 1.0;   // metres per cell
    GridKind kind = GridKind::binary;
    std::vector<double> values;

    VoxelGrid() = default;
    VoxelGrid(int res, double spc, GridKind k = GridKind::binary);

    int64_t size() const { return static_cast<int64_t>(resolution) * resolution * resolution; }
    int64_t index(int x, int y, int z) const {
        return (static_cast<int64_t>(z) * resolution + y) * resolution + x;
    }
    double at(int x, int y, int z) const { return values[static_cast<size_t>(index(x, y, z))]; }
    void set(int x, int y, int z, double v) { values[static_cast<size_t>(index(x, y, z))] = v; }
    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < resolution && y < resolution && z < resolution;
    }
    int64_t occupied_count(double threshold = 0.5) const;
    void validate() const;
};

// Euler angles in radians, intrinsic X-Y-Z order; each in [0, 2pi).
struct CameraPose {
    std::array<double, 3> euler{0.0, 0.0, 0.0};
};

constexpr double kNoHit = std::numeric_limits<double>::infinity();

// Orthographic depth render; one ray per (x, y) pixel along +z.
struct DepthImage {
    int width = 0, height = 0;
    double spacing = 1.0;
    CameraPose camera;
    std::vector<double> depths;  // metres; kNoHit where the ray missed

    double at(int x, int y) const { return depths[static_cast<size_t>(y) * width + x]; }
    void set(int x, int y, double v) { depths[static_cast<size_t>(y) * width + x] = v; }
};

struct RigidAlignment {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, det +1
    std::array<double, 3> translation{0, 0, 0};                 // voxel units
    bool degenerate = false;  // covariance rank-deficient or isotropic
};

// Thresholded intersection-over-union; b is the binary ground truth, a may be
// probabilistic and is cut at strict `> p`. Empty/empty is defined as 1.
double iou(const VoxelGrid& a, const VoxelGrid& b, double p);

VoxelGrid binarize(const VoxelGrid& g, double p);

// Cartesian product of n uniformly spaced angles per axis, x-major order.
std::vector<CameraPose> enumerate_rotations(int n_per_axis);

// Nearest-neighbour rotation of a binary grid about its centre.
VoxelGrid rotate_grid(const VoxelGrid& g, const CameraPose& pose);

DepthImage render_depth(const VoxelGrid& g, const CameraPose& pose);

// Visible-surface shell: one occupied cell per finite-depth pixel.
VoxelGrid depth_to_partial_grid(const DepthImage& d, int resolution);

// Rotate so the principal axes of the occupied cells map to the grid axes in
// descending-eigenvalue order, and recentre the centroid.
std::pair<VoxelGrid, RigidAlignment> pca_align(const VoxelGrid& g);

VoxelGrid apply_alignment(const VoxelGrid& g, const RigidAlignment& a);
RigidAlignment invert_alignment(const RigidAlignment& a);

// VXG1 container: 16-byte header (magic "VXG1", u32 resolution, f32 spacing,
// u8 kind, 3 pad bytes) followed by bit-packed occupancy (binary, x fastest)
// or little-endian f32 values (probabilistic).
void save_grid(const VoxelGrid& g, const std::string& path);
VoxelGrid load_grid(const std::string& path);
void write_grid(const VoxelGrid& g, std::ostream& os);
VoxelGrid read_grid(std::istream& is);

// DPH1 container for depth images: magic "DPH1", u32 width, u32 height,
// f32 spacing, 3 x f32 euler, then f32 depths (inf for no-hit).
void save_depth(const DepthImage& d, const std::string& path);
DepthImage load_depth(const std::string& path);

namespace detail {
// Occupancy counts used by iou; the ref version is the brute-force oracle.
struct IouCounts {
    int64_t inter = 0, uni = 0;
};
IouCounts iou_counts(const VoxelGrid& a, const VoxelGrid& b, double p);
namespace ref {
IouCounts iou_counts(const VoxelGrid& a, const VoxelGrid& b, double p);
}
}  // namespace detail

}  // namespace physvox::voxel
