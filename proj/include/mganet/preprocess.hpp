#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mganet/core.hpp"
#include "mganet/resample.hpp"
#include "mganet/sdt.hpp"
#include "mganet/volume.hpp"

namespace mganet {

// ---------------------------------------------------------------------------
// histograms

struct Histogram {
    std::vector<double> edges;   // n_bins + 1, strictly increasing over [0,1]
    std::vector<double> counts;  // n_bins, non-negative

    int n_bins() const { return int(counts.size()); }

    void validate() const {
        if (counts.empty() || edges.size() != counts.size() + 1)
            throw EmptyReference("histogram has no bins");
        for (size_t i = 0; i + 1 < edges.size(); i++)
            if (!(edges[i] < edges[i + 1]))
                throw EmptyReference("histogram edges not strictly increasing");
        double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        if (!(total > 0.0)) throw EmptyReference("histogram total count is zero");
        for (double c : counts)
            if (c < 0.0) throw EmptyReference("negative histogram count");
    }

    double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

    /// CDF at value v, linear within bins, 0 below, 1 above.
    double cdf(double v) const {
        if (v <= edges.front()) return 0.0;
        if (v >= edges.back()) return 1.0;
        double tot = total();
        double cum = 0.0;
        for (size_t b = 0; b < counts.size(); b++) {
            if (v < edges[b + 1]) {
                double frac = (v - edges[b]) / (edges[b + 1] - edges[b]);
                return (cum + counts[b] * frac) / tot;
            }
            cum += counts[b];
        }
        return 1.0;
    }

    /// Inverse CDF (quantile), linear within bins.
    double inverse_cdf(double u) const {
        u = std::clamp(u, 0.0, 1.0);
        double tot = total();
        double target = u * tot;
        double cum = 0.0;
        for (size_t b = 0; b < counts.size(); b++) {
            if (cum + counts[b] >= target) {
                double frac = counts[b] > 0.0 ? (target - cum) / counts[b] : 0.0;
                return edges[b] + frac * (edges[b + 1] - edges[b]);
            }
            cum += counts[b];
        }
        return edges.back();
    }
};

/// Histogram of the nonzero voxels on a uniform [0,1] grid.
inline Histogram histogram_of(const Volume& v, int n_bins = 256) {
    Histogram h;
    h.edges.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; i++) h.edges[i] = double(i) / n_bins;
    h.counts.assign(n_bins, 0.0);
    for (float x : v.data) {
        if (x == 0.0f) continue;
        double p = std::clamp(double(x), 0.0, 1.0);
        int b = std::min(n_bins - 1, int(p * n_bins));
        h.counts[b] += 1.0;
    }
    return h;
}

/// Mean of per-volume normalized histograms over nonzero voxels.
inline Histogram average_histogram(const std::vector<Volume>& volumes, int n_bins = 256) {
    if (volumes.empty()) throw EmptyList("average_histogram: no volumes");
    Histogram avg;
    avg.edges.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; i++) avg.edges[i] = double(i) / n_bins;
    avg.counts.assign(n_bins, 0.0);
    int used = 0;
    for (const Volume& v : volumes) {
        Histogram h = histogram_of(v, n_bins);
        double tot = h.total();
        if (!(tot > 0.0)) continue;  // all-background volume contributes nothing
        for (int b = 0; b < n_bins; b++) avg.counts[b] += h.counts[b] / tot;
        used++;
    }
    if (used == 0) throw EmptyReference("average_histogram: all volumes are background");
    for (auto& c : avg.counts) c /= used;
    return avg;
}

/// Monotone CDF matching of nonzero intensities onto a reference histogram.
/// Background zeros pass through untouched.
inline Volume histogram_match(const Volume& v, const Histogram& ref, int n_bins = 256) {
    ref.validate();
    Histogram own = histogram_of(v, n_bins);
    if (!(own.total() > 0.0)) return v;  // all background: nothing to match

    Volume out = v;
    for (auto& x : out.data) {
        if (x == 0.0f) continue;
        double u = own.cdf(std::clamp(double(x), 0.0, 1.0));
        x = float(std::clamp(ref.inverse_cdf(u), 0.0, 1.0));
    }
    out.record_intensity_range();
    return out;
}

// ---------------------------------------------------------------------------
// intensity conditioning

/// Min-max rescale of the nonzero region onto [eps, 1]; zeros stay zero so
/// background never collides with tissue.
inline Volume normalize_intensity(const Volume& v, double eps = 1e-3) {
    float lo = 0.f, hi = 0.f;
    bool any = false;
    for (float x : v.data) {
        if (x == 0.0f) continue;
        if (!any) {
            lo = hi = x;
            any = true;
        } else {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    if (!any || !(hi > lo)) throw ConstantVolume("normalize_intensity: constant volume");
    Volume out = v;
    double scale = (1.0 - eps) / (double(hi) - double(lo));
    for (auto& x : out.data)
        if (x != 0.0f) x = float(eps + (double(x) - double(lo)) * scale);
    out.record_intensity_range();
    return out;
}

// ---------------------------------------------------------------------------
// CLAHE

struct ClaheConfig {
    double clip = 2.0;   // multiple of the mean bin count
    int tiles = 8;       // tile grid per axis
    int n_bins = 4096;
    bool per_slice = false;  // 2D tile grid applied slice by slice instead of 3D
};

namespace detail {

/// Per-tile mapping: clipped histogram, midpoint-of-bin CDF. Values in [0,1].
struct TileMapping {
    std::vector<double> cum;  // cum[b] = sum of bins < b, after clipping
    double total = 0.0;

    double apply(double v, int n_bins) const {
        if (total <= 0.0) return v;  // empty tile: identity
        double p = std::clamp(v, 0.0, 1.0) * n_bins;
        int b = std::min(n_bins - 1, int(p));
        double bin_count = cum[b + 1] - cum[b];
        return std::clamp((cum[b] + 0.5 * bin_count) / total, 0.0, 1.0);
    }
};

inline TileMapping build_tile_mapping(std::vector<double>& hist, double clip_limit) {
    TileMapping m;
    double total = std::accumulate(hist.begin(), hist.end(), 0.0);
    m.total = total;
    const int n = int(hist.size());
    if (total > 0.0 && clip_limit > 0.0) {
        double excess = 0.0;
        for (auto& h : hist)
            if (h > clip_limit) {
                excess += h - clip_limit;
                h = clip_limit;
            }
        double add = excess / n;
        for (auto& h : hist) h += add;
    }
    m.cum.resize(n + 1);
    m.cum[0] = 0.0;
    for (int b = 0; b < n; b++) m.cum[b + 1] = m.cum[b] + hist[b];
    return m;
}

/// Per-axis tile index and interpolation weight toward the next tile center.
inline void tile_coords(int idx, int dim, int tiles, int& t0, double& w) {
    double tile_size = double(dim) / tiles;
    double pos = (idx + 0.5) / tile_size - 0.5;  // in tile-center units
    if (pos <= 0.0) {
        t0 = 0;
        w = 0.0;
    } else if (pos >= tiles - 1) {
        t0 = tiles - 1;
        w = 0.0;
    } else {
        t0 = int(pos);
        w = pos - t0;
    }
}

}  // namespace detail

/// Contrast-limited adaptive histogram equalization over a 3D tile grid
/// (or per z-slice when cfg.per_slice). Nonzero voxels only; output in [0,1].
inline Volume clahe(const Volume& v, const ClaheConfig& cfg = {}) {
    if (!(cfg.clip > 0.0)) throw ConstantVolume("clahe: clip must be > 0");
    if (cfg.tiles < 1) throw ConstantVolume("clahe: tiles must be >= 1");
    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    const int T = cfg.tiles;
    const int nb = cfg.n_bins;

    auto tile_of = [T](int idx, int dim) {
        return std::min(T - 1, int(size_t(idx) * T / size_t(dim)));
    };

    Volume out = v;

    const int tz_count = cfg.per_slice ? nz : T;
    std::vector<std::vector<double>> hists(size_t(T) * T * tz_count,
                                           std::vector<double>(nb, 0.0));
    auto hist_at = [&](int tx, int ty, int tz) -> std::vector<double>& {
        return hists[(size_t(tz) * T + ty) * T + tx];
    };

    for (int z = 0; z < nz; z++) {
        int tz = cfg.per_slice ? z : tile_of(z, nz);
        for (int y = 0; y < ny; y++) {
            int ty = tile_of(y, ny);
            for (int x = 0; x < nx; x++) {
                float val = v.at(x, y, z);
                if (val == 0.0f) continue;
                int tx = tile_of(x, nx);
                double p = std::clamp(double(val), 0.0, 1.0);
                int b = std::min(nb - 1, int(p * nb));
                hist_at(tx, ty, tz)[b] += 1.0;
            }
        }
    }

    std::vector<detail::TileMapping> maps(hists.size());
    for (size_t i = 0; i < hists.size(); i++) {
        double total = std::accumulate(hists[i].begin(), hists[i].end(), 0.0);
        double clip_limit = cfg.clip * total / nb;
        maps[i] = detail::build_tile_mapping(hists[i], clip_limit);
    }
    auto map_at = [&](int tx, int ty, int tz) -> const detail::TileMapping& {
        return maps[(size_t(tz) * T + ty) * T + tx];
    };

    for (int z = 0; z < nz; z++) {
        int tz0;
        double wz;
        if (cfg.per_slice) {
            tz0 = z;
            wz = 0.0;
        } else {
            detail::tile_coords(z, nz, T, tz0, wz);
        }
        for (int y = 0; y < ny; y++) {
            int ty0;
            double wy;
            detail::tile_coords(y, ny, T, ty0, wy);
            for (int x = 0; x < nx; x++) {
                float val = v.at(x, y, z);
                if (val == 0.0f) continue;
                int tx0;
                double wx;
                detail::tile_coords(x, nx, T, tx0, wx);
                double acc = 0.0;
                for (int dz = 0; dz < 2; dz++) {
                    double zz = dz ? wz : 1.0 - wz;
                    if (zz == 0.0) continue;
                    int tz = std::min(tz0 + dz, (cfg.per_slice ? nz : T) - 1);
                    for (int dy = 0; dy < 2; dy++) {
                        double yy = dy ? wy : 1.0 - wy;
                        if (yy == 0.0) continue;
                        int ty = std::min(ty0 + dy, T - 1);
                        for (int dx = 0; dx < 2; dx++) {
                            double xx = dx ? wx : 1.0 - wx;
                            if (xx == 0.0) continue;
                            int tx = std::min(tx0 + dx, T - 1);
                            acc += zz * yy * xx * map_at(tx, ty, tz).apply(val, nb);
                        }
                    }
                }
                out.at(x, y, z) = float(acc);
            }
        }
    }
    out.record_intensity_range();
    return out;
}

// ---------------------------------------------------------------------------
// canonical cube

/// How a volume was fitted into the N^3 cube, enough to undo it exactly.
struct PadInfo {
    Vec3i orig_dims;
    Vec3d orig_spacing;
    Affine orig_affine;
    Vec3i scaled_dims;  // dims after the (optional) downscale, before padding
    Vec3i pad_lo;
    int target = 128;
};

struct ResizePadResult {
    Volume volume;
    PadInfo info;
};

/// Resize so the maximum dimension equals N (only when some dim exceeds N),
/// then zero-pad symmetrically to N^3. Spacing and affine follow the scale.
inline ResizePadResult resize_pad(const Volume& v, int target = 128) {
    if (target < 8) throw InvalidConfig("resize_pad: target side < 8");
    PadInfo info;
    info.orig_dims = v.dims;
    info.orig_spacing = v.spacing;
    info.orig_affine = v.affine;
    info.target = target;

    int max_dim = std::max({v.dims[0], v.dims[1], v.dims[2]});
    Vec3i sdims = v.dims;
    std::vector<float> scaled;
    if (max_dim > target) {
        double scale = double(target) / max_dim;
        for (int i = 0; i < 3; i++)
            sdims[i] = std::max(1, int(std::lround(v.dims[i] * scale)));
        scaled = resample_to_dims(v.data, v.dims, sdims);
    } else {
        scaled = v.data;
    }
    info.scaled_dims = sdims;

    Vec3d ratio;  // old voxels per new voxel
    Vec3d spn;
    for (int i = 0; i < 3; i++) {
        ratio[i] = double(v.dims[i]) / sdims[i];
        spn[i] = v.spacing[i] * ratio[i];
    }

    Vec3i pad_lo, pad_hi;
    for (int i = 0; i < 3; i++) {
        int pad = target - sdims[i];
        if (pad < 0) pad = 0;
        pad_lo[i] = pad / 2;
        pad_hi[i] = pad - pad_lo[i];
    }
    info.pad_lo = pad_lo;

    Vec3i nd{target, target, target};
    std::vector<float> cube(size_t(target) * target * target, 0.0f);
    for (int z = 0; z < sdims[2]; z++)
        for (int y = 0; y < sdims[1]; y++) {
            const float* src = scaled.data() + (size_t(z) * sdims[1] + y) * sdims[0];
            float* dst = cube.data() +
                         (size_t(z + pad_lo[2]) * target + (y + pad_lo[1])) * target +
                         pad_lo[0];
            std::copy(src, src + sdims[0], dst);
        }

    // index -> world stays consistent: map cube index to original index space
    Affine aff;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) aff.linear[i][j] = v.affine.linear[i][j] * ratio[j];
    // src = (dst_core + 0.5) * ratio - 0.5, dst_core = dst - pad_lo
    for (int i = 0; i < 3; i++) {
        double shift = 0.0;
        for (int j = 0; j < 3; j++)
            shift += v.affine.linear[i][j] *
                     ((0.5 * ratio[j] - 0.5) - ratio[j] * pad_lo[j]);
        aff.origin[i] = v.affine.origin[i] + shift;
    }

    ResizePadResult r;
    r.volume = Volume(nd, spn, aff, std::move(cube));
    r.info = info;
    return r;
}

/// Inverse of resize_pad: crop the padding and resample back to the original
/// grid and geometry.
inline Volume unpad_restore(const Volume& cube, const PadInfo& info) {
    const int N = info.target;
    if (cube.dims != Vec3i{N, N, N}) throw GeometryMismatch("unpad: not a canonical cube");
    std::vector<float> core(size_t(info.scaled_dims[0]) * info.scaled_dims[1] *
                            info.scaled_dims[2]);
    size_t i = 0;
    for (int z = 0; z < info.scaled_dims[2]; z++)
        for (int y = 0; y < info.scaled_dims[1]; y++)
            for (int x = 0; x < info.scaled_dims[0]; x++, i++)
                core[i] = cube.at(x + info.pad_lo[0], y + info.pad_lo[1],
                                  z + info.pad_lo[2]);
    std::vector<float> full =
        info.scaled_dims == info.orig_dims
            ? std::move(core)
            : resample_to_dims(core, info.scaled_dims, info.orig_dims);
    return Volume(info.orig_dims, info.orig_spacing, info.orig_affine, std::move(full));
}

// ---------------------------------------------------------------------------
// reference construction & simplified conditioning

/// Reconstruction target: the preprocessed image restricted to the 4 mm-margin
/// reference mask.
inline Volume build_reference(const Volume& v, const BinaryMask& m, double margin_mm = 4.0) {
    if (!m.same_geometry(v)) throw GeometryMismatch("build_reference: geometry mismatch");
    BinaryMask ref = reference_mask(m, margin_mm);
    Volume out = v;
    for (size_t i = 0; i < out.data.size(); i++)
        if (!ref.data[i]) out.data[i] = 0.0f;
    out.record_intensity_range();
    return out;
}

/// Simplified stand-in for external denoising: separable Gaussian smoothing
/// restricted to the nonzero support.
inline Volume denoise_gaussian(const Volume& v, double sigma_voxels = 0.5) {
    if (sigma_voxels <= 0.0) return v;
    int radius = std::max(1, int(std::ceil(3.0 * sigma_voxels)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; i++) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_voxels * sigma_voxels));
        sum += k[i + radius];
    }
    for (auto& w : k) w /= sum;

    const Vec3i d = v.dims;
    std::vector<float> a = v.data, b(a.size());
    for (int axis = 0; axis < 3; axis++) {
        int n = d[axis];
        int stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
        int n_lines = int(a.size()) / n;
        for (int line = 0; line < n_lines; line++) {
            // decompose line index into the two fixed coordinates
            int c0 = 0, c1 = 0;
            if (axis == 0) {
                c0 = line % d[1];
                c1 = line / d[1];
            } else if (axis == 1) {
                c0 = line % d[0];
                c1 = line / d[0];
            } else {
                c0 = line % d[0];
                c1 = line / d[0];
            }
            size_t base;
            if (axis == 0)
                base = (size_t(c1) * d[1] + c0) * d[0];
            else if (axis == 1)
                base = size_t(c1) * d[0] * d[1] + c0;
            else
                base = size_t(c1) * d[0] + c0;
            for (int i = 0; i < n; i++) {
                double acc = 0.0;
                for (int j = -radius; j <= radius; j++) {
                    int s = std::clamp(i + j, 0, n - 1);
                    acc += k[j + radius] * a[base + size_t(s) * stride];
                }
                b[base + size_t(i) * stride] = float(acc);
            }
        }
        std::swap(a, b);
    }
    Volume out = v;
    for (size_t i = 0; i < a.size(); i++) out.data[i] = v.data[i] == 0.0f ? 0.0f : a[i];
    out.record_intensity_range();
    return out;
}

/// Simplified stand-in for bias-field correction: divide by a quadratic
/// least-squares fit of the nonzero intensities, renormalized to its mean.
inline Volume bias_flatten(const Volume& v) {
    const int NC = 10;  // 1, x, y, z, x2, y2, z2, xy, xz, yz
    auto basis = [&](double x, double y, double z, double* phi) {
        phi[0] = 1.0;
        phi[1] = x;
        phi[2] = y;
        phi[3] = z;
        phi[4] = x * x;
        phi[5] = y * y;
        phi[6] = z * z;
        phi[7] = x * y;
        phi[8] = x * z;
        phi[9] = y * z;
    };
    double ata[NC][NC] = {};
    double atb[NC] = {};
    double phi[NC];
    size_t n_fg = 0;
    for (int z = 0; z < v.dims[2]; z++)
        for (int y = 0; y < v.dims[1]; y++)
            for (int x = 0; x < v.dims[0]; x++) {
                float val = v.at(x, y, z);
                if (val == 0.0f) continue;
                n_fg++;
                basis(double(x) / v.dims[0], double(y) / v.dims[1], double(z) / v.dims[2],
                      phi);
                for (int i = 0; i < NC; i++) {
                    for (int j = 0; j < NC; j++) ata[i][j] += phi[i] * phi[j];
                    atb[i] += phi[i] * val;
                }
            }
    if (n_fg < NC * 4) return v;  // too little support for a stable fit

    // plain Gaussian elimination with partial pivoting
    double m[NC][NC + 1];
    for (int i = 0; i < NC; i++) {
        for (int j = 0; j < NC; j++) m[i][j] = ata[i][j];
        m[i][NC] = atb[i];
    }
    for (int col = 0; col < NC; col++) {
        int piv = col;
        for (int r = col + 1; r < NC; r++)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (std::abs(m[piv][col]) < 1e-12) return v;
        std::swap(m[piv], m[col]);
        for (int r = 0; r < NC; r++) {
            if (r == col) continue;
            double f = m[r][col] / m[col][col];
            for (int c = col; c <= NC; c++) m[r][c] -= f * m[col][c];
        }
    }
    double coef[NC];
    for (int i = 0; i < NC; i++) coef[i] = m[i][NC] / m[i][i];

    // mean of the fitted field over the foreground
    double mean_fit = 0.0;
    std::vector<double> fit(v.data.size(), 0.0);
    size_t i = 0;
    for (int z = 0; z < v.dims[2]; z++)
        for (int y = 0; y < v.dims[1]; y++)
            for (int x = 0; x < v.dims[0]; x++, i++) {
                if (v.data[i] == 0.0f) continue;
                basis(double(x) / v.dims[0], double(y) / v.dims[1], double(z) / v.dims[2],
                      phi);
                double f = 0.0;
                for (int c = 0; c < NC; c++) f += coef[c] * phi[c];
                fit[i] = f;
                mean_fit += f;
            }
    mean_fit /= double(n_fg);
    if (!(mean_fit > 0.0)) return v;

    Volume out = v;
    for (size_t j = 0; j < out.data.size(); j++) {
        if (out.data[j] == 0.0f) continue;
        double f = fit[j];
        if (f < 0.05 * mean_fit) f = 0.05 * mean_fit;
        out.data[j] = float(double(out.data[j]) * mean_fit / f);
    }
    out.record_intensity_range();
    return out;
}

}  // namespace mganet
