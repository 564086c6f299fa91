#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "mganet/core.hpp"

namespace mganet {

/// 3D scalar grid with physical geometry. Storage is x-fastest, z-slowest
/// (NIfTI order): data[(z*ny + y)*nx + x]. Immutable by convention after
/// construction; transforms return new volumes.
struct Volume {
    Vec3i dims{1, 1, 1};          // (nx, ny, nz)
    Vec3d spacing{1.0, 1.0, 1.0};  // mm per voxel, per axis
    Affine affine;                 // index -> world (mm)
    std::vector<float> data;
    float intensity_min = 0.0f;
    float intensity_max = 0.0f;

    Volume() = default;

    Volume(Vec3i d, Vec3d sp, std::vector<float> values)
        : dims(d), spacing(sp), affine(Affine::diagonal(sp)), data(std::move(values)) {
        validate();
        record_intensity_range();
    }

    Volume(Vec3i d, Vec3d sp, Affine aff, std::vector<float> values)
        : dims(d), spacing(sp), affine(aff), data(std::move(values)) {
        validate();
        record_intensity_range();
    }

    static Volume zeros(Vec3i d, Vec3d sp = {1.0, 1.0, 1.0}) {
        return Volume(d, sp, std::vector<float>(size_t(d[0]) * d[1] * d[2], 0.0f));
    }

    void validate() const {
        for (int i = 0; i < 3; i++) {
            if (dims[i] < 1) throw DimOutOfRange("volume dim < 1");
            if (!(spacing[i] > 0.0)) throw GeometryMismatch("spacing must be > 0");
        }
        if (data.size() != voxel_count()) throw GeometryMismatch("data length != nx*ny*nz");
        if (!affine.invertible()) throw GeometryMismatch("affine upper 3x3 not invertible");
    }

    size_t voxel_count() const { return size_t(dims[0]) * dims[1] * dims[2]; }

    size_t index(int x, int y, int z) const {
        return (size_t(z) * dims[1] + y) * dims[0] + x;
    }

    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }

    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
    }

    void record_intensity_range() {
        auto [lo, hi] = std::minmax_element(data.begin(), data.end());
        intensity_min = data.empty() ? 0.0f : *lo;
        intensity_max = data.empty() ? 0.0f : *hi;
    }

    bool same_geometry(const Volume& o, double tol = 1e-6) const {
        if (dims != o.dims) return false;
        for (int i = 0; i < 3; i++)
            if (!near(spacing[i], o.spacing[i], tol)) return false;
        return true;
    }
};

/// Binary mask on the same grid conventions as Volume; every voxel is 0 or 1.
struct BinaryMask {
    Vec3i dims{1, 1, 1};
    Vec3d spacing{1.0, 1.0, 1.0};
    Affine affine;
    std::vector<uint8_t> data;

    BinaryMask() = default;

    BinaryMask(Vec3i d, Vec3d sp, std::vector<uint8_t> values)
        : dims(d), spacing(sp), affine(Affine::diagonal(sp)), data(std::move(values)) {
        validate();
    }

    BinaryMask(Vec3i d, Vec3d sp, Affine aff, std::vector<uint8_t> values)
        : dims(d), spacing(sp), affine(aff), data(std::move(values)) {
        validate();
    }

    static BinaryMask zeros(Vec3i d, Vec3d sp = {1.0, 1.0, 1.0}) {
        return BinaryMask(d, sp, std::vector<uint8_t>(size_t(d[0]) * d[1] * d[2], 0));
    }

    void validate() const {
        for (int i = 0; i < 3; i++) {
            if (dims[i] < 1) throw DimOutOfRange("mask dim < 1");
            if (!(spacing[i] > 0.0)) throw GeometryMismatch("spacing must be > 0");
        }
        if (data.size() != voxel_count()) throw GeometryMismatch("data length != nx*ny*nz");
        for (uint8_t v : data)
            if (v > 1) throw GeometryMismatch("mask voxel not in {0,1}");
    }

    size_t voxel_count() const { return size_t(dims[0]) * dims[1] * dims[2]; }

    size_t index(int x, int y, int z) const {
        return (size_t(z) * dims[1] + y) * dims[0] + x;
    }

    uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
    uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }

    bool same_geometry(const BinaryMask& o, double tol = 1e-6) const {
        if (dims != o.dims) return false;
        for (int i = 0; i < 3; i++)
            if (!near(spacing[i], o.spacing[i], tol)) return false;
        return true;
    }

    bool same_geometry(const Volume& o, double tol = 1e-6) const {
        if (dims != o.dims) return false;
        for (int i = 0; i < 3; i++)
            if (!near(spacing[i], o.spacing[i], tol)) return false;
        return true;
    }
};

/// Physical volume of one voxel in mm^3.
inline double voxel_volume(const Volume& v) {
    return v.spacing[0] * v.spacing[1] * v.spacing[2];
}

inline double voxel_volume(const BinaryMask& m) {
    return m.spacing[0] * m.spacing[1] * m.spacing[2];
}

/// Number of foreground voxels.
inline size_t mask_count(const BinaryMask& m) {
    size_t n = 0;
    for (uint8_t v : m.data) n += v;
    return n;
}

inline BinaryMask complement(const BinaryMask& m) {
    BinaryMask out = m;
    for (auto& v : out.data) v = uint8_t(1 - v);
    return out;
}

}  // namespace mganet
