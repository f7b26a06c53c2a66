#include "physvox/elastic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <queue>

#include "physvox/kernels.hpp"

namespace physvox::elastic {

void MaterialParams::validate() const {
    if (!(youngs_modulus_gpa >= kEminGpa && youngs_modulus_gpa <= kEmaxGpa))
        throw ParameterError("Young's modulus out of range [1e-5, 23] GPa");
    if (!(poissons_ratio >= 0.0 && poissons_ratio <= kNuMax))
        throw ParameterError("Poisson's ratio out of range [0, 0.4995]");
}

void ForceSpec::validate() const {
    if (!(magnitude >= 0.0)) throw ParameterError("force magnitude must be >= 0");
    const double n2 = direction[0] * direction[0] + direction[1] * direction[1] +
                      direction[2] * direction[2];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
        throw ParameterError("force direction must be a unit vector");
}

namespace {

// Local corner offsets matching the documented node order.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

void shape_gradients(double xi, double eta, double zeta, double h, double dn[8][3]) {
    for (int a = 0; a < 8; ++a) {
        const double sx = 2.0 * kCorner[a][0] - 1.0;
        const double sy = 2.0 * kCorner[a][1] - 1.0;
        const double sz = 2.0 * kCorner[a][2] - 1.0;
        // d/dx = (2/h) d/dxi for a cube of side h
        dn[a][0] = 0.125 * sx * (1 + sy * eta) * (1 + sz * zeta) * (2.0 / h);
        dn[a][1] = 0.125 * (1 + sx * xi) * sy * (1 + sz * zeta) * (2.0 / h);
        dn[a][2] = 0.125 * (1 + sx * xi) * (1 + sy * eta) * sz * (2.0 / h);
    }
}

void shape_values(double xi, double eta, double zeta, double n[8]) {
    for (int a = 0; a < 8; ++a) {
        const double sx = 2.0 * kCorner[a][0] - 1.0;
        const double sy = 2.0 * kCorner[a][1] - 1.0;
        const double sz = 2.0 * kCorner[a][2] - 1.0;
        n[a] = 0.125 * (1 + sx * xi) * (1 + sy * eta) * (1 + sz * zeta);
    }
}

}  // namespace

std::array<double, 576> element_stiffness(const MaterialParams& m, double spacing) {
    m.validate();
    if (!(spacing > 0.0)) throw ParameterError("element spacing must be positive");
    if (m.poissons_ratio >= 0.5) throw SolverError("singular material: nu >= 0.5");

    const double e_pa = m.youngs_modulus_gpa * 1e9;
    const double nu = m.poissons_ratio;
    const double f = e_pa / ((1 + nu) * (1 - 2 * nu));
    Eigen::Matrix<double, 6, 6> d = Eigen::Matrix<double, 6, 6>::Zero();
    d(0, 0) = d(1, 1) = d(2, 2) = f * (1 - nu);
    d(0, 1) = d(0, 2) = d(1, 0) = d(1, 2) = d(2, 0) = d(2, 1) = f * nu;
    d(3, 3) = d(4, 4) = d(5, 5) = e_pa / (2 * (1 + nu));

    Eigen::Matrix<double, 24, 24> ke = Eigen::Matrix<double, 24, 24>::Zero();
    const double gp = 1.0 / std::sqrt(3.0);
    const double detj = std::pow(spacing / 2.0, 3);
    double dn[8][3];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                shape_gradients((2 * i - 1) * gp, (2 * j - 1) * gp, (2 * k - 1) * gp, spacing, dn);
                Eigen::Matrix<double, 6, 24> b = Eigen::Matrix<double, 6, 24>::Zero();
                for (int a = 0; a < 8; ++a) {
                    b(0, 3 * a + 0) = dn[a][0];
                    b(1, 3 * a + 1) = dn[a][1];
                    b(2, 3 * a + 2) = dn[a][2];
                    b(3, 3 * a + 0) = dn[a][1];
                    b(3, 3 * a + 1) = dn[a][0];
                    b(4, 3 * a + 1) = dn[a][2];
                    b(4, 3 * a + 2) = dn[a][1];
                    b(5, 3 * a + 0) = dn[a][2];
                    b(5, 3 * a + 2) = dn[a][0];
                }
                ke += b.transpose() * d * b * detj;
            }

    std::array<double, 576> out;
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c) out[static_cast<size_t>(r) * 24 + c] = ke(r, c);
    return out;
}

HexMesh build_hex_mesh(const voxel::VoxelGrid& g, int n_locations) {
    if (g.kind != voxel::GridKind::binary)
        throw ParameterError("build_hex_mesh: grid must be binary");
    if (n_locations < 1) throw ParameterError("build_hex_mesh: need n_locations >= 1");
    const int n = g.resolution;

    // Largest 6-connected occupied component.
    std::vector<int> comp(static_cast<size_t>(g.size()), -1);
    int ncomp = 0;
    std::vector<int64_t> best_cells;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const int64_t i0 = g.index(x, y, z);
                if (g.values[static_cast<size_t>(i0)] != 1.0 || comp[static_cast<size_t>(i0)] >= 0)
                    continue;
                std::vector<int64_t> cells;
                std::queue<std::array<int, 3>> q;
                q.push({x, y, z});
                comp[static_cast<size_t>(i0)] = ncomp;
                while (!q.empty()) {
                    const auto [cx, cy, cz] = q.front();
                    q.pop();
                    cells.push_back(g.index(cx, cy, cz));
                    static constexpr int d6[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                                     {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
                    for (const auto& d : d6) {
                        const int nx = cx + d[0], ny = cy + d[1], nz = cz + d[2];
                        if (!g.in_bounds(nx, ny, nz)) continue;
                        const int64_t ni = g.index(nx, ny, nz);
                        if (g.values[static_cast<size_t>(ni)] == 1.0 &&
                            comp[static_cast<size_t>(ni)] < 0) {
                            comp[static_cast<size_t>(ni)] = ncomp;
                            q.push({nx, ny, nz});
                        }
                    }
                }
                if (cells.size() > best_cells.size()) best_cells = std::move(cells);
                ++ncomp;
            }
    if (best_cells.empty()) throw ParameterError("build_hex_mesh: empty grid");
    if (ncomp > 1)
        std::cerr << "warning: build_hex_mesh using largest of " << ncomp
                  << " connected components\n";
    std::sort(best_cells.begin(), best_cells.end());

    HexMesh mesh;
    mesh.spacing = g.spacing;
    std::map<int64_t, int> node_ids;  // lattice key -> node index, insertion by key order
    auto lattice_key = [n](int x, int y, int z) {
        return (static_cast<int64_t>(z) * (n + 1) + y) * (n + 1) + x;
    };
    auto node_of = [&](int x, int y, int z) {
        const int64_t key = lattice_key(x, y, z);
        auto it = node_ids.find(key);
        if (it != node_ids.end()) return it->second;
        const int id = static_cast<int>(mesh.nodes.size());
        node_ids.emplace(key, id);
        mesh.nodes.push_back({x * g.spacing, y * g.spacing, z * g.spacing});
        return id;
    };

    bool grounded = false;
    std::vector<std::array<int, 3>> cell_coords;
    for (int64_t ci : best_cells) {
        const int x = static_cast<int>(ci % n);
        const int y = static_cast<int>((ci / n) % n);
        const int z = static_cast<int>(ci / (static_cast<int64_t>(n) * n));
        if (z == 0) grounded = true;
        cell_coords.push_back({x, y, z});
        std::array<int, 8> elem;
        for (int a = 0; a < 8; ++a)
            elem[a] = node_of(x + kCorner[a][0], y + kCorner[a][1], z + kCorner[a][2]);
        mesh.elements.push_back(elem);
    }
    if (!grounded)
        throw ParameterError("build_hex_mesh: occupied region does not touch the ground plane");

    for (const auto& [key, id] : node_ids) {
        const int z = static_cast<int>(key / ((n + 1) * (n + 1)));
        if (z == 0) mesh.fixed_nodes.push_back(id);
    }

    // Top-surface nodes: the upper face of the highest occupied cell per column.
    std::map<int, std::vector<int>> top_by_x;  // lattice x -> node ids
    std::map<std::pair<int, int>, int> col_top;
    for (const auto& c : cell_coords) {
        auto key = std::make_pair(c[0], c[1]);
        auto it = col_top.find(key);
        if (it == col_top.end() || c[2] > it->second) col_top[key] = c[2];
    }
    std::map<int, bool> top_node_seen;
    for (const auto& [xy, zmax] : col_top) {
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int id = node_of(xy.first + dx, xy.second + dy, zmax + 1);
                if (!top_node_seen[id]) {
                    top_node_seen[id] = true;
                    top_by_x[xy.first + dx].push_back(id);
                }
            }
    }
    const int xmin = top_by_x.begin()->first;
    const int xmax = top_by_x.rbegin()->first;
    mesh.load_sites.assign(static_cast<size_t>(n_locations), {});
    for (const auto& [x, ids] : top_by_x) {
        int bin = n_locations == 1
                      ? 0
                      : static_cast<int>((static_cast<int64_t>(x - xmin) * n_locations) /
                                         (xmax - xmin + 1));
        bin = std::min(bin, n_locations - 1);
        auto& site = mesh.load_sites[static_cast<size_t>(bin)];
        site.insert(site.end(), ids.begin(), ids.end());
    }
    // Backfill any empty site from the nearest non-empty one.
    for (int s = 0; s < n_locations; ++s) {
        if (!mesh.load_sites[static_cast<size_t>(s)].empty()) continue;
        for (int d = 1; d < n_locations; ++d) {
            const int lo = s - d, hi = s + d;
            if (lo >= 0 && !mesh.load_sites[static_cast<size_t>(lo)].empty()) {
                mesh.load_sites[static_cast<size_t>(s)] = mesh.load_sites[static_cast<size_t>(lo)];
                break;
            }
            if (hi < n_locations && !mesh.load_sites[static_cast<size_t>(hi)].empty()) {
                mesh.load_sites[static_cast<size_t>(s)] = mesh.load_sites[static_cast<size_t>(hi)];
                break;
            }
        }
    }
    return mesh;
}

namespace detail {

ColorGroups color_elements(const HexMesh& mesh) {
    ColorGroups groups;
    for (size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& p0 = mesh.nodes[static_cast<size_t>(mesh.elements[e][0])];
        const int x = static_cast<int>(std::lround(p0[0] / mesh.spacing));
        const int y = static_cast<int>(std::lround(p0[1] / mesh.spacing));
        const int z = static_cast<int>(std::lround(p0[2] / mesh.spacing));
        groups[static_cast<size_t>((x & 1) | ((y & 1) << 1) | ((z & 1) << 2))].push_back(
            static_cast<int>(e));
    }
    return groups;
}

namespace ref {

void stiffness_matvec(const HexMesh& mesh, const std::array<double, 576>& ke, const double* x,
                      double* y) {
    std::fill(y, y + mesh.dof_count(), 0.0);
    double xl[24], yl[24];
    for (const auto& elem : mesh.elements) {
        for (int a = 0; a < 8; ++a)
            for (int c = 0; c < 3; ++c) xl[3 * a + c] = x[3 * elem[static_cast<size_t>(a)] + c];
        for (int r = 0; r < 24; ++r) {
            double acc = 0.0;
            const double* krow = ke.data() + static_cast<size_t>(r) * 24;
            for (int c = 0; c < 24; ++c) acc += krow[c] * xl[c];
            yl[r] = acc;
        }
        for (int a = 0; a < 8; ++a)
            for (int c = 0; c < 3; ++c) y[3 * elem[static_cast<size_t>(a)] + c] += yl[3 * a + c];
    }
}

}  // namespace ref

void stiffness_matvec(const HexMesh& mesh, const std::array<double, 576>& ke,
                      const ColorGroups& colors, const double* x, double* y) {
    std::fill(y, y + mesh.dof_count(), 0.0);
    for (const auto& group : colors) {
        const int64_t ng = static_cast<int64_t>(group.size());
#pragma omp parallel for schedule(static)
        for (int64_t gi = 0; gi < ng; ++gi) {
            const auto& elem = mesh.elements[static_cast<size_t>(group[static_cast<size_t>(gi)])];
            double xl[24], yl[24];
            for (int a = 0; a < 8; ++a)
                for (int c = 0; c < 3; ++c)
                    xl[3 * a + c] = x[3 * elem[static_cast<size_t>(a)] + c];
            for (int r = 0; r < 24; ++r) {
                double acc = 0.0;
                const double* krow = ke.data() + static_cast<size_t>(r) * 24;
                for (int c = 0; c < 24; ++c) acc += krow[c] * xl[c];
                yl[r] = acc;
            }
            for (int a = 0; a < 8; ++a)
                for (int c = 0; c < 3; ++c)
                    y[3 * elem[static_cast<size_t>(a)] + c] += yl[3 * a + c];
        }
    }
}

}  // namespace detail

namespace {

std::vector<double> dof_mask(const HexMesh& mesh) {
    std::vector<double> mask(static_cast<size_t>(mesh.dof_count()), 1.0);
    for (int nid : mesh.fixed_nodes)
        for (int c = 0; c < 3; ++c) mask[static_cast<size_t>(3 * nid + c)] = 0.0;
    for (const auto& [nid, axis] : mesh.fixed_dofs) mask[static_cast<size_t>(3 * nid + axis)] = 0.0;
    return mask;
}

}  // namespace

DisplacementField solve_with_loads(const HexMesh& mesh, const MaterialParams& m,
                                   const std::vector<double>& loads) {
    m.validate();
    const int ndof = mesh.dof_count();
    if (static_cast<int>(loads.size()) != ndof)
        throw DimensionError("solve_with_loads: load vector length mismatch");
    if (mesh.fixed_nodes.empty() && mesh.fixed_dofs.empty())
        throw SolverError("solve: mesh has no Dirichlet constraints (ungrounded)");
    for (const auto& elem : mesh.elements)
        for (int a = 0; a < 8; ++a)
            if (elem[static_cast<size_t>(a)] < 0 ||
                elem[static_cast<size_t>(a)] >= static_cast<int>(mesh.nodes.size()))
                throw DimensionError("solve: element references invalid node");

    const auto ke = element_stiffness(m, mesh.spacing);
    const auto colors = detail::color_elements(mesh);
    const auto mask = dof_mask(mesh);

    // Jacobi preconditioner from the assembled diagonal.
    std::vector<double> diag(static_cast<size_t>(ndof), 0.0);
    for (const auto& elem : mesh.elements)
        for (int a = 0; a < 8; ++a)
            for (int c = 0; c < 3; ++c)
                diag[static_cast<size_t>(3 * elem[static_cast<size_t>(a)] + c)] +=
                    ke[static_cast<size_t>(3 * a + c) * 24 + (3 * a + c)];
    for (int i = 0; i < ndof; ++i)
        if (mask[static_cast<size_t>(i)] == 0.0 || diag[static_cast<size_t>(i)] == 0.0)
            diag[static_cast<size_t>(i)] = 1.0;

    std::vector<double> f(loads);
    for (int i = 0; i < ndof; ++i) f[static_cast<size_t>(i)] *= mask[static_cast<size_t>(i)];
    const double fnorm = std::sqrt(kernels::det_sumsq(f.data(), ndof));

    DisplacementField out;
    out.u.assign(mesh.nodes.size(), {0.0, 0.0, 0.0});
    if (fnorm == 0.0) return out;

    std::vector<double> x(static_cast<size_t>(ndof), 0.0), r(f), z(static_cast<size_t>(ndof)),
        p(static_cast<size_t>(ndof)), ap(static_cast<size_t>(ndof));
    auto apply = [&](const double* in, double* out_v) {
        detail::stiffness_matvec(mesh, ke, colors, in, out_v);
        for (int i = 0; i < ndof; ++i) out_v[static_cast<size_t>(i)] *= mask[static_cast<size_t>(i)];
    };

    for (int i = 0; i < ndof; ++i) z[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] / diag[static_cast<size_t>(i)];
    p = z;
    double rho = kernels::det_dot(r.data(), z.data(), ndof);
    const double tol = 1e-8 * fnorm;
    const int64_t max_iter = 20LL * ndof;
    double rnorm = fnorm;
    int64_t it = 0;
    while (rnorm > tol) {
        if (it++ >= max_iter)
            throw SolverError("PCG did not converge within 20*DOF iterations", rnorm / fnorm);
        apply(p.data(), ap.data());
        const double pap = kernels::det_dot(p.data(), ap.data(), ndof);
        if (!(pap > 0.0))
            throw SolverError("PCG breakdown: operator not positive definite (check grounding)",
                              rnorm / fnorm);
        const double alpha = rho / pap;
        kernels::axpy(alpha, p.data(), x.data(), ndof);
        kernels::axpy(-alpha, ap.data(), r.data(), ndof);
        for (int i = 0; i < ndof; ++i)
            z[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] / diag[static_cast<size_t>(i)];
        const double rho_new = kernels::det_dot(r.data(), z.data(), ndof);
        kernels::xpby(z.data(), rho_new / rho, p.data(), ndof);
        rho = rho_new;
        rnorm = std::sqrt(kernels::det_sumsq(r.data(), ndof));
    }

    for (size_t nid = 0; nid < mesh.nodes.size(); ++nid)
        for (int c = 0; c < 3; ++c) out.u[nid][static_cast<size_t>(c)] = x[3 * nid + static_cast<size_t>(c)];
    return out;
}

DisplacementField solve_displacement(const HexMesh& mesh, const MaterialParams& m,
                                     const ForceSpec& f) {
    f.validate();
    if (f.location_index < 0 || f.location_index >= static_cast<int>(mesh.load_sites.size()))
        throw ParameterError("solve_displacement: load site index out of range");
    const auto& site = mesh.load_sites[static_cast<size_t>(f.location_index)];
    if (site.empty()) throw ParameterError("solve_displacement: empty load site");
    std::vector<double> loads(static_cast<size_t>(mesh.dof_count()), 0.0);
    const double per_node = f.magnitude / static_cast<double>(site.size());
    for (int nid : site)
        for (int c = 0; c < 3; ++c)
            loads[static_cast<size_t>(3 * nid + c)] += per_node * f.direction[static_cast<size_t>(c)];
    return solve_with_loads(mesh, m, loads);
}

voxel::VoxelGrid deform_and_revoxelize(const HexMesh& mesh, const DisplacementField& u,
                                       int resolution, double spacing,
                                       double* clipped_fraction) {
    if (u.u.size() != mesh.nodes.size())
        throw DimensionError("deform_and_revoxelize: displacement/node count mismatch");
    voxel::VoxelGrid out(resolution, spacing, voxel::GridKind::binary);
    static constexpr double kXi[3] = {-2.0 / 3.0, 0.0, 2.0 / 3.0};
    int64_t clipped = 0, total = 0;
    double nv[8];
    for (const auto& elem : mesh.elements) {
        double px[8], py[8], pz[8];
        for (int a = 0; a < 8; ++a) {
            const int nid = elem[static_cast<size_t>(a)];
            px[a] = mesh.nodes[static_cast<size_t>(nid)][0] + u.u[static_cast<size_t>(nid)][0];
            py[a] = mesh.nodes[static_cast<size_t>(nid)][1] + u.u[static_cast<size_t>(nid)][1];
            pz[a] = mesh.nodes[static_cast<size_t>(nid)][2] + u.u[static_cast<size_t>(nid)][2];
        }
        for (double xi : kXi)
            for (double eta : kXi)
                for (double zeta : kXi) {
                    shape_values(xi, eta, zeta, nv);
                    double sx = 0, sy = 0, sz = 0;
                    for (int a = 0; a < 8; ++a) {
                        sx += nv[a] * px[a];
                        sy += nv[a] * py[a];
                        sz += nv[a] * pz[a];
                    }
                    ++total;
                    const int cx = static_cast<int>(std::floor(sx / spacing));
                    const int cy = static_cast<int>(std::floor(sy / spacing));
                    const int cz = static_cast<int>(std::floor(sz / spacing));
                    if (out.in_bounds(cx, cy, cz))
                        out.set(cx, cy, cz, 1.0);
                    else
                        ++clipped;
                }
    }
    const double frac = total ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
    if (clipped_fraction) *clipped_fraction = frac;
    if (clipped > 0)
        std::cerr << "warning: deformed geometry clipped at grid boundary (fraction "
                  << frac << ")\n";
    return out;
}

double calibrate_force_max(const HexMesh& mesh, const MaterialParams& softest,
                           int location_index, const std::array<double, 3>& direction,
                           double fraction) {
    ForceSpec unit{1.0, location_index, direction};
    const DisplacementField d = solve_displacement(mesh, softest, unit);
    double dmax = 0.0;
    for (const auto& v : d.u)
        dmax = std::max(dmax, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
    double zmax = 0.0;
    for (const auto& p : mesh.nodes) zmax = std::max(zmax, p[2]);
    if (dmax <= 0.0 || zmax <= 0.0) return 1.0;
    return fraction * zmax / dmax;
}

}  // namespace physvox::elastic
