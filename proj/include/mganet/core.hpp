#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mganet {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define MGANET_DEFINE_ERROR(name)                                  \
    struct name : Error {                                          \
        explicit name(const std::string& msg = #name) : Error(msg) {} \
    }

// I/O
MGANET_DEFINE_ERROR(BadMagic);
MGANET_DEFINE_ERROR(UnsupportedDatatype);
MGANET_DEFINE_ERROR(TruncatedFile);
MGANET_DEFINE_ERROR(DimOutOfRange);
MGANET_DEFINE_ERROR(IoFailure);

// geometry / masks
MGANET_DEFINE_ERROR(GeometryMismatch);
MGANET_DEFINE_ERROR(DegenerateMask);
MGANET_DEFINE_ERROR(NegativeTau);

// preprocessing
MGANET_DEFINE_ERROR(EmptyReference);
MGANET_DEFINE_ERROR(EmptyList);
MGANET_DEFINE_ERROR(ConstantVolume);

// augmentation
MGANET_DEFINE_ERROR(AngleOutOfRange);
MGANET_DEFINE_ERROR(SpacingOutOfRange);
MGANET_DEFINE_ERROR(SizeConstraintViolated);
MGANET_DEFINE_ERROR(TauOutOfRange);
MGANET_DEFINE_ERROR(BadKernel);

// tensor engine / model
MGANET_DEFINE_ERROR(ShapeMismatch);
MGANET_DEFINE_ERROR(ChannelMismatch);
MGANET_DEFINE_ERROR(NonDivisibleStride);
MGANET_DEFINE_ERROR(OddChannels);
MGANET_DEFINE_ERROR(InvalidConfig);

// training / metrics
MGANET_DEFINE_ERROR(EmptyDataset);
MGANET_DEFINE_ERROR(NonFiniteLoss);
MGANET_DEFINE_ERROR(EmptyGroundTruth);
MGANET_DEFINE_ERROR(TooFewPairs);
MGANET_DEFINE_ERROR(ZeroVariance);

// cli
MGANET_DEFINE_ERROR(UnknownCommand);
MGANET_DEFINE_ERROR(ConfigInvalid);

#undef MGANET_DEFINE_ERROR

using Vec3i = std::array<int, 3>;
using Vec3d = std::array<double, 3>;

/// Index -> world (mm) map: world = linear * index + origin.
struct Affine {
    std::array<std::array<double, 3>, 3> linear{};
    Vec3d origin{0.0, 0.0, 0.0};

    static Affine diagonal(const Vec3d& spacing) {
        Affine a;
        for (int i = 0; i < 3; i++) a.linear[i][i] = spacing[i];
        return a;
    }

    Vec3d apply(const Vec3d& idx) const {
        Vec3d w;
        for (int i = 0; i < 3; i++)
            w[i] = linear[i][0] * idx[0] + linear[i][1] * idx[1] +
                   linear[i][2] * idx[2] + origin[i];
        return w;
    }

    double det() const {
        const auto& m = linear;
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }

    bool invertible(double eps = 1e-12) const { return std::abs(det()) > eps; }

    /// World (mm) -> index. Throws if the linear part is singular.
    Vec3d apply_inverse(const Vec3d& world) const {
        double d = det();
        if (std::abs(d) <= 1e-12) throw GeometryMismatch("affine is singular");
        const auto& m = linear;
        std::array<std::array<double, 3>, 3> inv;
        inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
        inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
        inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
        inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
        inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
        inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
        inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
        inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
        inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        Vec3d t{world[0] - origin[0], world[1] - origin[1], world[2] - origin[2]};
        Vec3d idx;
        for (int i = 0; i < 3; i++)
            idx[i] = inv[i][0] * t[0] + inv[i][1] * t[1] + inv[i][2] * t[2];
        return idx;
    }
};

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

/// splitmix64: derives independent rng stream seeds from (seed, index).
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mganet
