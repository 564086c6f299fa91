#pragma once

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mganet/core.hpp"
#include "mganet/volume.hpp"

namespace mganet::nifti {

// NIfTI-1 datatype codes we accept.
enum : int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
};

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;     // must be 348
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];         // dim[0] = rank
    float intent_p1;
    float intent_p2;
    float intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];        // pixdim[0] = qfac
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax;
    int32_t glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];          // "n+1\0" or "ni1\0"
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

namespace detail {

inline bool is_gzip(const std::vector<char>& bytes) {
    return bytes.size() >= 2 && uint8_t(bytes[0]) == 0x1F && uint8_t(bytes[1]) == 0x8B;
}

inline std::vector<char> read_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    f.seekg(0, std::ios::end);
    std::streamoff n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<char> bytes(static_cast<size_t>(n));
    if (n > 0) f.read(bytes.data(), n);
    if (!f) throw IoFailure("read failed: " + path);
    return bytes;
}

inline std::vector<char> gunzip(const std::vector<char>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoFailure("inflateInit failed");
    std::vector<char> out;
    out.reserve(in.size() * 4);
    std::vector<char> buf(1 << 16);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = uInt(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf.data());
        zs.avail_out = uInt(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw TruncatedFile("corrupt or truncated gzip stream");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw TruncatedFile("gzip stream ended early");
        }
    }
    inflateEnd(&zs);
    return out;
}

inline std::vector<char> gzip_bytes(const std::vector<char>& in) {
    z_stream zs{};
    // default gzip header: zero mtime, so output is byte-stable across runs
    if (deflateInit2(&zs, 6, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoFailure("deflateInit failed");
    std::vector<char> out(deflateBound(&zs, uLong(in.size())) + 32);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = uInt(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = uInt(out.size());
    if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
        deflateEnd(&zs);
        throw IoFailure("deflate failed");
    }
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

template <typename T>
inline void bswap(T& v) {
    char* p = reinterpret_cast<char*>(&v);
    for (size_t i = 0; i < sizeof(T) / 2; i++) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

inline void swap_header(Nifti1Header& h) {
    bswap(h.sizeof_hdr);
    bswap(h.extents);
    bswap(h.session_error);
    for (auto& d : h.dim) bswap(d);
    bswap(h.intent_p1);
    bswap(h.intent_p2);
    bswap(h.intent_p3);
    bswap(h.intent_code);
    bswap(h.datatype);
    bswap(h.bitpix);
    bswap(h.slice_start);
    for (auto& p : h.pixdim) bswap(p);
    bswap(h.vox_offset);
    bswap(h.scl_slope);
    bswap(h.scl_inter);
    bswap(h.slice_end);
    bswap(h.cal_max);
    bswap(h.cal_min);
    bswap(h.slice_duration);
    bswap(h.toffset);
    bswap(h.glmax);
    bswap(h.glmin);
    bswap(h.qform_code);
    bswap(h.sform_code);
    bswap(h.quatern_b);
    bswap(h.quatern_c);
    bswap(h.quatern_d);
    bswap(h.qoffset_x);
    bswap(h.qoffset_y);
    bswap(h.qoffset_z);
    for (auto& v : h.srow_x) bswap(v);
    for (auto& v : h.srow_y) bswap(v);
    for (auto& v : h.srow_z) bswap(v);
}

inline Affine affine_from_header(const Nifti1Header& h) {
    Affine a;
    if (h.sform_code > 0) {
        for (int j = 0; j < 3; j++) {
            a.linear[0][j] = h.srow_x[j];
            a.linear[1][j] = h.srow_y[j];
            a.linear[2][j] = h.srow_z[j];
        }
        a.origin = {h.srow_x[3], h.srow_y[3], h.srow_z[3]};
    } else if (h.qform_code > 0) {
        double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        double a2 = 1.0 - (b * b + c * c + d * d);
        double qa = a2 > 0.0 ? std::sqrt(a2) : 0.0;
        double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
        double R[3][3] = {
            {qa * qa + b * b - c * c - d * d, 2 * (b * c - qa * d), 2 * (b * d + qa * c)},
            {2 * (b * c + qa * d), qa * qa + c * c - b * b - d * d, 2 * (c * d - qa * b)},
            {2 * (b * d - qa * c), 2 * (c * d + qa * b), qa * qa + d * d - b * b - c * c}};
        for (int i = 0; i < 3; i++)
            for (int j = 0; j < 3; j++) {
                double s = h.pixdim[j + 1];
                if (j == 2) s *= qfac;
                a.linear[i][j] = R[i][j] * s;
            }
        a.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    } else {
        a = Affine::diagonal({h.pixdim[1], h.pixdim[2], h.pixdim[3]});
    }
    if (!a.invertible()) a = Affine::diagonal({h.pixdim[1], h.pixdim[2], h.pixdim[3]});
    return a;
}

template <typename Src>
inline void convert_payload(const char* raw, size_t n, bool swap, std::vector<float>& out) {
    out.resize(n);
    for (size_t i = 0; i < n; i++) {
        Src v;
        std::memcpy(&v, raw + i * sizeof(Src), sizeof(Src));
        if (swap && sizeof(Src) > 1) bswap(v);
        out[i] = float(v);
    }
}

}  // namespace detail

/// Parse a header from raw (already uncompressed) bytes. Detects byte order.
inline Nifti1Header parse_header(const std::vector<char>& bytes, bool* swapped = nullptr) {
    if (bytes.size() < sizeof(Nifti1Header))
        throw TruncatedFile("file smaller than the 348-byte header");
    Nifti1Header h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    bool swap = false;
    if (h.sizeof_hdr != 348) {
        detail::bswap(h.sizeof_hdr);
        if (h.sizeof_hdr != 348) throw BadMagic("sizeof_hdr is not 348 in either byte order");
        detail::bswap(h.sizeof_hdr);  // restore, swap everything in one place
        detail::swap_header(h);
        swap = true;
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0 && std::memcmp(h.magic, "ni1", 4) != 0)
        throw BadMagic("magic is neither n+1 nor ni1");
    if (h.dim[0] < 1 || h.dim[0] > 7) throw DimOutOfRange("dim[0] outside [1,7]");
    if (swapped) *swapped = swap;
    return h;
}

/// Read a NIfTI-1 volume (.nii or .nii.gz, single-file or hdr/img pair).
inline Volume read_volume(const std::string& path) {
    std::vector<char> bytes = detail::read_raw(path);
    if (detail::is_gzip(bytes)) bytes = detail::gunzip(bytes);

    bool swap = false;
    Nifti1Header h = parse_header(bytes, &swap);

    // spatial dims; higher dims must be trivial
    int rank = h.dim[0];
    Vec3i dims{1, 1, 1};
    for (int i = 0; i < 3; i++)
        if (i < rank) {
            if (h.dim[i + 1] < 1) throw DimOutOfRange("non-positive spatial dim");
            dims[i] = h.dim[i + 1];
        }
    for (int i = 4; i <= rank; i++)
        if (h.dim[i] > 1) throw DimOutOfRange("only 3D volumes are supported");

    size_t nvox = size_t(dims[0]) * dims[1] * dims[2];

    int elem = 0;
    switch (h.datatype) {
        case DT_UINT8: elem = 1; break;
        case DT_INT16: elem = 2; break;
        case DT_INT32: elem = 4; break;
        case DT_FLOAT32: elem = 4; break;
        case DT_FLOAT64: elem = 8; break;
        default: throw UnsupportedDatatype("datatype " + std::to_string(h.datatype));
    }
    if (h.bitpix != elem * 8) throw UnsupportedDatatype("bitpix inconsistent with datatype");

    const std::vector<char>* payload_src = &bytes;
    std::vector<char> img_bytes;
    size_t offset;
    if (std::memcmp(h.magic, "ni1", 4) == 0) {
        std::filesystem::path p(path);
        p.replace_extension(".img");
        img_bytes = detail::read_raw(p.string());
        if (detail::is_gzip(img_bytes)) img_bytes = detail::gunzip(img_bytes);
        payload_src = &img_bytes;
        offset = size_t(std::max(0.0f, h.vox_offset));
    } else {
        offset = size_t(h.vox_offset);
        if (offset < sizeof(Nifti1Header)) throw TruncatedFile("vox_offset before end of header");
    }
    if (payload_src->size() < offset + nvox * elem)
        throw TruncatedFile("payload shorter than dim product");

    const char* raw = payload_src->data() + offset;
    std::vector<float> data;
    switch (h.datatype) {
        case DT_UINT8: detail::convert_payload<uint8_t>(raw, nvox, swap, data); break;
        case DT_INT16: detail::convert_payload<int16_t>(raw, nvox, swap, data); break;
        case DT_INT32: detail::convert_payload<int32_t>(raw, nvox, swap, data); break;
        case DT_FLOAT32: detail::convert_payload<float>(raw, nvox, swap, data); break;
        case DT_FLOAT64: detail::convert_payload<double>(raw, nvox, swap, data); break;
    }

    if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
        for (auto& v : data) v = h.scl_slope * v + h.scl_inter;

    Vec3d spacing;
    for (int i = 0; i < 3; i++)
        spacing[i] = h.pixdim[i + 1] > 0.0f ? double(h.pixdim[i + 1]) : 1.0;

    return Volume(dims, spacing, detail::affine_from_header(h), std::move(data));
}

/// Write a volume as float32, single-file "n+1", sform only, little-endian.
/// Paths ending in .gz are gzip-compressed (deterministic stream).
inline void write_volume(const Volume& v, const std::string& path) {
    v.validate();
    for (int i = 0; i < 3; i++)
        if (v.dims[i] < 1) throw DimOutOfRange("zero-sized dim");

    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = int16_t(v.dims[0]);
    h.dim[2] = int16_t(v.dims[1]);
    h.dim[3] = int16_t(v.dims[2]);
    for (int i = 4; i < 8; i++) h.dim[i] = 1;
    h.datatype = DT_FLOAT32;
    h.bitpix = 32;
    h.pixdim[0] = 1.0f;
    for (int i = 0; i < 3; i++) h.pixdim[i + 1] = float(v.spacing[i]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.cal_min = v.intensity_min;
    h.cal_max = v.intensity_max;
    h.qform_code = 0;
    h.sform_code = 1;
    for (int j = 0; j < 4; j++) {
        h.srow_x[j] = float(j < 3 ? v.affine.linear[0][j] : v.affine.origin[0]);
        h.srow_y[j] = float(j < 3 ? v.affine.linear[1][j] : v.affine.origin[1]);
        h.srow_z[j] = float(j < 3 ? v.affine.linear[2][j] : v.affine.origin[2]);
    }
    std::memcpy(h.magic, "n+1", 4);

    std::vector<char> bytes(352 + v.data.size() * 4);
    std::memcpy(bytes.data(), &h, sizeof(h));
    // bytes [348,352) stay zero: no extensions
    std::memcpy(bytes.data() + 352, v.data.data(), v.data.size() * 4);

    bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gz) bytes = detail::gzip_bytes(bytes);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open for write: " + path);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw IoFailure("write failed: " + path);
}

/// Mask I/O piggybacks on the volume format.
inline BinaryMask read_mask(const std::string& path, double threshold = 0.5) {
    Volume v = read_volume(path);
    std::vector<uint8_t> d(v.data.size());
    for (size_t i = 0; i < d.size(); i++) d[i] = v.data[i] > threshold ? 1 : 0;
    return BinaryMask(v.dims, v.spacing, v.affine, std::move(d));
}

inline void write_mask(const BinaryMask& m, const std::string& path) {
    std::vector<float> d(m.data.size());
    for (size_t i = 0; i < d.size(); i++) d[i] = float(m.data[i]);
    write_volume(Volume(m.dims, m.spacing, m.affine, std::move(d)), path);
}

}  // namespace mganet::nifti
