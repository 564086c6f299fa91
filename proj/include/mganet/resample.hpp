#pragma once

#include <cmath>
#include <vector>

#include "mganet/core.hpp"
#include "mganet/volume.hpp"

namespace mganet {

/// Trilinear sample at fractional index coordinates; samples outside the
/// grid return `oob`. Clamp mode instead keeps the edge value.
template <typename Getter>
inline double sample_trilinear_impl(Getter&& get, const Vec3i& dims, double fx, double fy,
                                    double fz, double oob, bool clamp_edges) {
    if (clamp_edges) {
        fx = std::clamp(fx, 0.0, double(dims[0] - 1));
        fy = std::clamp(fy, 0.0, double(dims[1] - 1));
        fz = std::clamp(fz, 0.0, double(dims[2] - 1));
    }
    int x0 = int(std::floor(fx)), y0 = int(std::floor(fy)), z0 = int(std::floor(fz));
    double wx = fx - x0, wy = fy - y0, wz = fz - z0;
    double acc = 0.0;
    for (int dz = 0; dz < 2; dz++)
        for (int dy = 0; dy < 2; dy++)
            for (int dx = 0; dx < 2; dx++) {
                double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) * (dz ? wz : 1.0 - wz);
                if (w == 0.0) continue;
                int x = x0 + dx, y = y0 + dy, z = z0 + dz;
                double v;
                if (x < 0 || x >= dims[0] || y < 0 || y >= dims[1] || z < 0 || z >= dims[2])
                    v = oob;
                else
                    v = get(x, y, z);
                acc += w * v;
            }
    return acc;
}

inline double sample_trilinear(const std::vector<float>& data, const Vec3i& dims, double fx,
                               double fy, double fz, double oob = 0.0,
                               bool clamp_edges = false) {
    auto get = [&](int x, int y, int z) {
        return double(data[(size_t(z) * dims[1] + y) * dims[0] + x]);
    };
    return sample_trilinear_impl(get, dims, fx, fy, fz, oob, clamp_edges);
}

/// Resample a grid to new dims with the align-centers convention:
/// src = (dst + 0.5) * old/new - 0.5. Edges are clamped, so constant
/// inputs stay constant.
inline std::vector<float> resample_to_dims(const std::vector<float>& data, const Vec3i& dims,
                                           const Vec3i& new_dims) {
    std::vector<float> out(size_t(new_dims[0]) * new_dims[1] * new_dims[2]);
    Vec3d r{double(dims[0]) / new_dims[0], double(dims[1]) / new_dims[1],
            double(dims[2]) / new_dims[2]};
    size_t i = 0;
    for (int z = 0; z < new_dims[2]; z++) {
        double fz = (z + 0.5) * r[2] - 0.5;
        for (int y = 0; y < new_dims[1]; y++) {
            double fy = (y + 0.5) * r[1] - 0.5;
            for (int x = 0; x < new_dims[0]; x++, i++) {
                double fx = (x + 0.5) * r[0] - 0.5;
                out[i] = float(sample_trilinear(data, dims, fx, fy, fz, 0.0, true));
            }
        }
    }
    return out;
}

}  // namespace mganet
