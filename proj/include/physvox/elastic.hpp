#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "physvox/errors.hpp"
#include "physvox/voxel.hpp"

namespace physvox::elastic {

constexpr double kEminGpa = 1e-5;   // soft-gel floor for the log scale
constexpr double kEmaxGpa = 23.0;   // concrete
constexpr double kNuMax = 0.4995;   // strictly below the incompressible limit

struct MaterialParams {
    double youngs_modulus_gpa = 1.0;
    double poissons_ratio = 0.3;
    void validate() const;
};

struct ForceSpec {
    double magnitude = 0.0;  // Newtons
    int location_index = 0;
    std::array<double, 3> direction{0.0, 0.0, -1.0};  // unit vector
    void validate() const;
};

// Trilinear hexahedra on the voxel lattice; node coordinates in metres.
// Local corner order: (0,0,0),(1,0,0),(1,1,0),(0,1,0),(0,0,1),(1,0,1),(1,1,1),(0,1,1).
struct HexMesh {
    std::vector<std::array<double, 3>> nodes;
    std::vector<std::array<int, 8>> elements;
    std::vector<int> fixed_nodes;                    // Dirichlet, all three DOFs
    std::vector<std::pair<int, int>> fixed_dofs;     // extra (node, axis) constraints
    std::vector<std::vector<int>> load_sites;        // node sets, one per force location
    double spacing = 1.0;
    int dof_count() const { return static_cast<int>(nodes.size()) * 3; }
};

struct DisplacementField {
    std::vector<std::array<double, 3>> u;  // metres, per node
};

// One element per occupied cell; nodes merged; bottom-plane nodes fixed;
// n_locations load sites spread along the top surface in x. Disconnected
// occupancy keeps the largest component (with a warning); a region that does
// not touch z=0 is an error.
HexMesh build_hex_mesh(const voxel::VoxelGrid& g, int n_locations);

// 24x24 stiffness of a cubic trilinear hexahedron, 2x2x2 Gauss quadrature,
// isotropic linear elasticity. Row-major, DOF order (node*3 + axis).
std::array<double, 24 * 24> element_stiffness(const MaterialParams& m, double spacing);

// Assembles K implicitly and solves K u = f by Jacobi-preconditioned CG to
// relative residual 1e-8; force spread equally over the chosen load site.
DisplacementField solve_displacement(const HexMesh& mesh, const MaterialParams& m,
                                     const ForceSpec& f);

// Same solver with an explicit per-DOF load vector (length 3*nodes).
DisplacementField solve_with_loads(const HexMesh& mesh, const MaterialParams& m,
                                   const std::vector<double>& loads);

// Displace nodes by u, sample each deformed element at 3^3 interior points and
// mark the cells containing them. Samples outside the grid are clipped;
// the fraction is reported through clipped_fraction when non-null.
voxel::VoxelGrid deform_and_revoxelize(const HexMesh& mesh, const DisplacementField& u,
                                       int resolution, double spacing,
                                       double* clipped_fraction = nullptr);

// Force magnitude at which the given material deflects by `fraction` of the
// object height (linear solve at unit force, then scaled).
double calibrate_force_max(const HexMesh& mesh, const MaterialParams& softest,
                           int location_index, const std::array<double, 3>& direction,
                           double fraction = 0.3);

namespace detail {
// Lattice-parity colouring: no two elements of one colour share a node, so
// the coloured scatter is race-free and thread-count independent.
using ColorGroups = std::array<std::vector<int>, 8>;
ColorGroups color_elements(const HexMesh& mesh);

// y = K x (element-by-element), before boundary masking. The ref version is a
// plain serial element loop kept as the oracle; the other runs the coloured
// OpenMP scatter.
void stiffness_matvec(const HexMesh& mesh, const std::array<double, 24 * 24>& ke,
                      const ColorGroups& colors, const double* x, double* y);
namespace ref {
void stiffness_matvec(const HexMesh& mesh, const std::array<double, 24 * 24>& ke,
                      const double* x, double* y);
}
}  // namespace detail

}  // namespace physvox::elastic
