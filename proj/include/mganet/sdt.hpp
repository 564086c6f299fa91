#pragma once

#include <cmath>
#include <vector>

#include "mganet/core.hpp"
#include "mganet/volume.hpp"

namespace mganet {

/// Signed distance per voxel in mm, positive inside the mask, negative
/// outside, saturated at +/- d_max. Distances are voxel-center to nearest
/// opposite-class voxel-center; no half-voxel offset.
struct SdtMap {
    Vec3i dims{1, 1, 1};
    Vec3d spacing{1.0, 1.0, 1.0};
    Affine affine;
    std::vector<float> data;
    float d_max = 5.0f;

    size_t voxel_count() const { return size_t(dims[0]) * dims[1] * dims[2]; }
    size_t index(int x, int y, int z) const {
        return (size_t(z) * dims[1] + y) * dims[0] + x;
    }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }

    bool same_geometry(const BinaryMask& o, double tol = 1e-6) const {
        if (dims != o.dims) return false;
        for (int i = 0; i < 3; i++)
            if (!near(spacing[i], o.spacing[i], tol)) return false;
        return true;
    }
};

namespace detail {

constexpr double kEdtInf = 1e20;

/// 1D squared-distance transform (lower envelope of parabolas) over samples
/// at positions i*step. In-place on f via scratch buffers.
inline void dt1d(std::vector<double>& f, double step, std::vector<double>& d,
                 std::vector<int>& v, std::vector<double>& z) {
    const int n = int(f.size());
    if (n == 1) {
        return;
    }
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    d.assign(n, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    const double s2 = step * step;
    for (int q = 1; q < n; q++) {
        double qq = double(q) * double(q) * s2;
        double s = 0.0;
        while (true) {
            int p = v[k];
            double pp = double(p) * double(p) * s2;
            s = ((f[q] + qq) - (f[p] + pp)) / (2.0 * step * (q - p));
            if (s <= z[k] && k > 0) {
                k--;
            } else {
                break;
            }
        }
        k++;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; q++) {
        double pos = double(q) * step;
        while (z[k + 1] < pos) k++;
        double dp = pos - double(v[k]) * step;
        d[q] = dp * dp + f[v[k]];
    }
    f.swap(d);
}

}  // namespace detail

/// Squared Euclidean distance (mm^2) from every voxel center to the nearest
/// voxel center where `feature` is nonzero. Exact, spacing-aware.
inline std::vector<double> squared_distance_to_set(const Vec3i& dims, const Vec3d& spacing,
                                                   const std::vector<uint8_t>& feature) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const size_t nvox = size_t(nx) * ny * nz;
    std::vector<double> g(nvox);
    for (size_t i = 0; i < nvox; i++) g[i] = feature[i] ? 0.0 : detail::kEdtInf;

    std::vector<double> line, scratch_d, scratch_z;
    std::vector<int> scratch_v;

    // x pass
    line.resize(nx);
    for (int z = 0; z < nz; z++)
        for (int y = 0; y < ny; y++) {
            size_t base = (size_t(z) * ny + y) * nx;
            for (int x = 0; x < nx; x++) line[x] = g[base + x];
            detail::dt1d(line, spacing[0], scratch_d, scratch_v, scratch_z);
            for (int x = 0; x < nx; x++) g[base + x] = line[x];
        }
    // y pass
    line.resize(ny);
    for (int z = 0; z < nz; z++)
        for (int x = 0; x < nx; x++) {
            size_t base = size_t(z) * ny * nx + x;
            for (int y = 0; y < ny; y++) line[y] = g[base + size_t(y) * nx];
            detail::dt1d(line, spacing[1], scratch_d, scratch_v, scratch_z);
            for (int y = 0; y < ny; y++) g[base + size_t(y) * nx] = line[y];
        }
    // z pass
    line.resize(nz);
    for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++) {
            size_t base = size_t(y) * nx + x;
            size_t stride = size_t(nx) * ny;
            for (int z = 0; z < nz; z++) line[z] = g[base + size_t(z) * stride];
            detail::dt1d(line, spacing[2], scratch_d, scratch_v, scratch_z);
            for (int z = 0; z < nz; z++) g[base + size_t(z) * stride] = line[z];
        }
    return g;
}

/// Exact signed Euclidean distance transform, clamped to +/- d_max (mm).
inline SdtMap signed_distance(const BinaryMask& m, double d_max = 5.0) {
    size_t ones = mask_count(m);
    if (ones == 0 || ones == m.voxel_count())
        throw DegenerateMask("signed_distance: mask is uniform");

    std::vector<uint8_t> inv(m.data.size());
    for (size_t i = 0; i < inv.size(); i++) inv[i] = uint8_t(1 - m.data[i]);

    auto d2_to_zero = squared_distance_to_set(m.dims, m.spacing, inv);
    auto d2_to_one = squared_distance_to_set(m.dims, m.spacing, m.data);

    SdtMap s;
    s.dims = m.dims;
    s.spacing = m.spacing;
    s.affine = m.affine;
    s.d_max = float(d_max);
    s.data.resize(m.data.size());
    for (size_t i = 0; i < s.data.size(); i++) {
        double d = m.data[i] ? std::sqrt(d2_to_zero[i]) : -std::sqrt(d2_to_one[i]);
        s.data[i] = float(std::clamp(d, -d_max, d_max));
    }
    return s;
}

/// Voxel is foreground iff sdt >= -tau: the mask grows outward with tau.
inline BinaryMask threshold_mask(const SdtMap& s, double tau) {
    if (tau < 0.0) throw NegativeTau("threshold_mask: tau < 0");
    BinaryMask m;
    m.dims = s.dims;
    m.spacing = s.spacing;
    m.affine = s.affine;
    m.data.resize(s.data.size());
    const float neg_tau = float(-tau);
    for (size_t i = 0; i < s.data.size(); i++) m.data[i] = s.data[i] >= neg_tau ? 1 : 0;
    return m;
}

/// Ground-truth mask with a margin (default 4 mm) — the support of the
/// reconstruction reference. The cap is kept above tau so saturated far
/// voxels can never leak into the thresholded mask.
inline BinaryMask reference_mask(const BinaryMask& m, double margin_mm = 4.0) {
    double d_max = margin_mm + 1.0;
    return threshold_mask(signed_distance(m, d_max), margin_mm);
}

}  // namespace mganet
