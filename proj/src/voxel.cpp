#include "physvox/voxel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

namespace physvox::voxel {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

Eigen::Matrix3d euler_xyz(const CameraPose& pose) {
    const double ax = pose.euler[0], ay = pose.euler[1], az = pose.euler[2];
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, std::cos(ax), -std::sin(ax), 0, std::sin(ax), std::cos(ax);
    ry << std::cos(ay), 0, std::sin(ay), 0, 1, 0, -std::sin(ay), 0, std::cos(ay);
    rz << std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0, 0, 0, 1;
    return rx * ry * rz;
}

}  // namespace

VoxelGrid::VoxelGrid(int res, double spc, GridKind k) : resolution(res), spacing(spc), kind(k) {
    if (!is_power_of_two(res)) throw ParameterError("grid resolution must be a power of two");
    if (!(spc > 0.0)) throw ParameterError("grid spacing must be positive");
    values.assign(static_cast<size_t>(size()), 0.0);
}

int64_t VoxelGrid::occupied_count(double threshold) const {
    int64_t n = 0;
    for (double v : values) n += v > threshold ? 1 : 0;
    return n;
}

void VoxelGrid::validate() const {
    if (!is_power_of_two(resolution)) throw ParameterError("resolution must be a power of two");
    if (!(spacing > 0.0)) throw ParameterError("spacing must be positive");
    if (static_cast<int64_t>(values.size()) != size())
        throw DimensionError("value count does not match resolution");
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("grid value outside [0,1]");
        if (kind == GridKind::binary && v != 0.0 && v != 1.0)
            throw ParameterError("binary grid value not in {0,1}");
    }
}

namespace detail {

namespace ref {

IouCounts iou_counts(const VoxelGrid& a, const VoxelGrid& b, double p) {
    IouCounts c;
    const int n = a.resolution;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const bool in_a = a.at(x, y, z) > p;
                const bool in_b = b.at(x, y, z) == 1.0;
                if (in_a && in_b) ++c.inter;
                if (in_a || in_b) ++c.uni;
            }
    return c;
}

}  // namespace ref

IouCounts iou_counts(const VoxelGrid& a, const VoxelGrid& b, double p) {
    const int64_t n = a.size();
    const double* av = a.values.data();
    const double* bv = b.values.data();
    int64_t inter = 0, uni = 0;
#pragma omp parallel for schedule(static) reduction(+ : inter, uni)
    for (int64_t i = 0; i < n; ++i) {
        const bool in_a = av[i] > p;
        const bool in_b = bv[i] == 1.0;
        inter += (in_a && in_b) ? 1 : 0;
        uni += (in_a || in_b) ? 1 : 0;
    }
    return {inter, uni};
}

}  // namespace detail

double iou(const VoxelGrid& a, const VoxelGrid& b, double p) {
    if (a.resolution != b.resolution) throw DimensionError("iou: grid resolutions differ");
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("iou: threshold must be in (0,1)");
    const auto c = detail::iou_counts(a, b, p);
    if (c.uni == 0) return 1.0;  // both thresholded sets empty: perfect agreement
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

VoxelGrid binarize(const VoxelGrid& g, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("binarize: threshold must be in (0,1)");
    VoxelGrid out(g.resolution, g.spacing, GridKind::binary);
    for (size_t i = 0; i < g.values.size(); ++i) out.values[i] = g.values[i] > p ? 1.0 : 0.0;
    return out;
}

std::vector<CameraPose> enumerate_rotations(int n_per_axis) {
    if (n_per_axis < 1) throw ParameterError("enumerate_rotations: need n >= 1");
    const double step = 2.0 * M_PI / n_per_axis;
    std::vector<CameraPose> poses;
    poses.reserve(static_cast<size_t>(n_per_axis) * n_per_axis * n_per_axis);
    for (int ix = 0; ix < n_per_axis; ++ix)
        for (int iy = 0; iy < n_per_axis; ++iy)
            for (int iz = 0; iz < n_per_axis; ++iz)
                poses.push_back({{ix * step, iy * step, iz * step}});
    return poses;
}

VoxelGrid rotate_grid(const VoxelGrid& g, const CameraPose& pose) {
    const int n = g.resolution;
    VoxelGrid out(n, g.spacing, g.kind);
    const Eigen::Matrix3d rinv = euler_xyz(pose).transpose();
    const double c = (n - 1) / 2.0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const Eigen::Vector3d q(x - c, y - c, z - c);
                const Eigen::Vector3d pnt = rinv * q;
                const int sx = static_cast<int>(std::lround(pnt.x() + c));
                const int sy = static_cast<int>(std::lround(pnt.y() + c));
                const int sz = static_cast<int>(std::lround(pnt.z() + c));
                if (g.in_bounds(sx, sy, sz)) out.set(x, y, z, g.at(sx, sy, sz));
            }
    return out;
}

DepthImage render_depth(const VoxelGrid& g, const CameraPose& pose) {
    if (g.kind != GridKind::binary) throw ParameterError("render_depth: grid must be binary");
    const VoxelGrid rot = rotate_grid(g, pose);
    const int n = g.resolution;
    DepthImage img;
    img.width = n;
    img.height = n;
    img.spacing = g.spacing;
    img.camera = pose;
    img.depths.assign(static_cast<size_t>(n) * n, kNoHit);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int z = 0; z < n; ++z)
                if (rot.at(x, y, z) == 1.0) {
                    img.set(x, y, z * g.spacing);
                    break;
                }
    return img;
}

VoxelGrid depth_to_partial_grid(const DepthImage& d, int resolution) {
    VoxelGrid out(resolution, d.spacing, GridKind::binary);
    if (d.width != resolution || d.height != resolution)
        throw DimensionError("depth_to_partial_grid: image extent != resolution");
    int64_t clamped = 0;
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x) {
            const double depth = d.at(x, y);
            if (!std::isfinite(depth)) continue;
            int z = static_cast<int>(std::lround(depth / d.spacing));
            if (z < 0) z = 0;
            if (z >= resolution) {
                z = resolution - 1;
                ++clamped;
            }
            out.set(x, y, z, 1.0);
        }
    if (clamped > 0)
        std::cerr << "warning: depth_to_partial_grid clamped " << clamped
                  << " pixels to the far boundary\n";
    return out;
}

std::pair<VoxelGrid, RigidAlignment> pca_align(const VoxelGrid& g) {
    if (g.kind != GridKind::binary) throw ParameterError("pca_align: grid must be binary");
    std::vector<Eigen::Vector3d> pts;
    const int n = g.resolution;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (g.at(x, y, z) == 1.0) pts.emplace_back(x, y, z);
    if (pts.size() < 4) throw ParameterError("pca_align: need at least 4 occupied cells");

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) {
        const Eigen::Vector3d d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(pts.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // Eigen returns ascending eigenvalues; we want descending (largest -> x).
    Eigen::Vector3d evals;
    Eigen::Matrix3d evecs;
    for (int i = 0; i < 3; ++i) {
        evals[i] = eig.eigenvalues()[2 - i];
        evecs.col(i) = eig.eigenvectors().col(2 - i);
    }

    RigidAlignment align;
    const double lmax = std::max(evals[0], 1e-30);
    const bool rank_deficient = evals[2] / lmax < 1e-9;
    const bool isotropic = (evals[0] - evals[2]) / lmax < 1e-9;
    align.degenerate = rank_deficient || isotropic ||
                       (evals[0] - evals[1]) / lmax < 1e-9 || (evals[1] - evals[2]) / lmax < 1e-9;

    Eigen::Matrix3d rot;
    if (isotropic) {
        rot.setIdentity();
    } else {
        // Sign convention: each eigenvector points positively along its target
        // axis; ties fall through to the next axis lexicographically.
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d v = evecs.col(i);
            double s = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
                const int j = (i + ax) % 3;
                if (std::abs(v[j]) > 1e-12) {
                    s = v[j] > 0 ? 1.0 : -1.0;
                    break;
                }
            }
            if (s < 0) evecs.col(i) = -v;
        }
        rot = evecs.transpose();
        if (rot.determinant() < 0) rot.row(2) = -rot.row(2);  // keep det +1
    }

    const double c = (n - 1) / 2.0;
    const Eigen::Vector3d center(c, c, c);
    const Eigen::Vector3d t = center - rot * centroid;
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) align.rotation[r * 3 + col] = rot(r, col);
    // whole-voxel translation: avoids a systematic half-cell rounding bias in
    // the nearest-neighbour resample and its inverse
    for (int r = 0; r < 3; ++r) align.translation[r] = std::round(t[r]);

    return {apply_alignment(g, align), align};
}

VoxelGrid apply_alignment(const VoxelGrid& g, const RigidAlignment& a) {
    const int n = g.resolution;
    VoxelGrid out(n, g.spacing, g.kind);
    Eigen::Matrix3d rot;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot(r, c) = a.rotation[r * 3 + c];
    const Eigen::Vector3d t(a.translation[0], a.translation[1], a.translation[2]);
    const Eigen::Matrix3d rinv = rot.transpose();
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                // inverse map: p = R^T (q - t)
                const Eigen::Vector3d q(x, y, z);
                const Eigen::Vector3d p = rinv * (q - t);
                const int sx = static_cast<int>(std::lround(p.x()));
                const int sy = static_cast<int>(std::lround(p.y()));
                const int sz = static_cast<int>(std::lround(p.z()));
                if (g.in_bounds(sx, sy, sz)) out.set(x, y, z, g.at(sx, sy, sz));
            }
    return out;
}

RigidAlignment invert_alignment(const RigidAlignment& a) {
    RigidAlignment inv;
    Eigen::Matrix3d rot;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot(r, c) = a.rotation[r * 3 + c];
    const Eigen::Vector3d t(a.translation[0], a.translation[1], a.translation[2]);
    const Eigen::Matrix3d rinv = rot.transpose();
    const Eigen::Vector3d tinv = -(rinv * t);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) inv.rotation[r * 3 + c] = rinv(r, c);
    for (int r = 0; r < 3; ++r) inv.translation[r] = tinv[r];
    inv.degenerate = a.degenerate;
    return inv;
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
    if (!is) throw FormatError("unexpected end of stream");
    return v;
}

}  // namespace

void write_grid(const VoxelGrid& g, std::ostream& os) {
    os.write("VXG1", 4);
    write_raw<uint32_t>(os, static_cast<uint32_t>(g.resolution));
    write_raw<float>(os, static_cast<float>(g.spacing));
    write_raw<uint8_t>(os, static_cast<uint8_t>(g.kind));
    const char pad[3] = {0, 0, 0};
    os.write(pad, 3);
    if (g.kind == GridKind::binary) {
        const int64_t nbytes = (g.size() + 7) / 8;
        std::vector<uint8_t> bits(static_cast<size_t>(nbytes), 0);
        for (int64_t i = 0; i < g.size(); ++i)
            if (g.values[static_cast<size_t>(i)] == 1.0)
                bits[static_cast<size_t>(i >> 3)] |= static_cast<uint8_t>(1u << (i & 7));
        os.write(reinterpret_cast<const char*>(bits.data()), nbytes);
    } else {
        for (double v : g.values) write_raw<float>(os, static_cast<float>(v));
    }
}

VoxelGrid read_grid(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "VXG1", 4) != 0) throw FormatError("bad magic: expected VXG1");
    const auto res = read_raw<uint32_t>(is);
    const auto spacing = read_raw<float>(is);
    const auto kind = read_raw<uint8_t>(is);
    char pad[3];
    is.read(pad, 3);
    if (kind > 1) throw FormatError("bad grid kind byte");
    VoxelGrid g(static_cast<int>(res), spacing, static_cast<GridKind>(kind));
    if (g.kind == GridKind::binary) {
        const int64_t nbytes = (g.size() + 7) / 8;
        std::vector<uint8_t> bits(static_cast<size_t>(nbytes));
        is.read(reinterpret_cast<char*>(bits.data()), nbytes);
        if (!is) throw FormatError("truncated VXG1 payload");
        for (int64_t i = 0; i < g.size(); ++i)
            g.values[static_cast<size_t>(i)] =
                (bits[static_cast<size_t>(i >> 3)] >> (i & 7)) & 1u ? 1.0 : 0.0;
    } else {
        for (auto& v : g.values) v = read_raw<float>(is);
    }
    return g;
}

void save_grid(const VoxelGrid& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    write_grid(g, os);
}

VoxelGrid load_grid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    return read_grid(is);
}

void save_depth(const DepthImage& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    os.write("DPH1", 4);
    write_raw<uint32_t>(os, static_cast<uint32_t>(d.width));
    write_raw<uint32_t>(os, static_cast<uint32_t>(d.height));
    write_raw<float>(os, static_cast<float>(d.spacing));
    for (double e : d.camera.euler) write_raw<float>(os, static_cast<float>(e));
    for (double v : d.depths) write_raw<float>(os, static_cast<float>(v));
}

DepthImage load_depth(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DPH1", 4) != 0) throw FormatError("bad magic: expected DPH1");
    DepthImage d;
    d.width = static_cast<int>(read_raw<uint32_t>(is));
    d.height = static_cast<int>(read_raw<uint32_t>(is));
    d.spacing = read_raw<float>(is);
    for (auto& e : d.camera.euler) e = read_raw<float>(is);
    d.depths.resize(static_cast<size_t>(d.width) * d.height);
    for (auto& v : d.depths) v = read_raw<float>(is);
    return d;
}

}  // namespace physvox::voxel
