#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "shapeforge/core.hpp"

namespace shapeforge {

/// 3D scalar image. Voxel (i,j,k) is centered at world position
/// origin + (i*sx, j*sy, k*sz); data is stored x-fastest. Image math is
/// 32-bit, accumulations are 64-bit. Values are immutable by convention once
/// a volume is built, so volumes can be shared read-only across workers.
struct Volume {
    std::array<std::uint32_t, 3> dims{0, 0, 0};   // nx, ny, nz
    std::array<double, 3> spacing{1.0, 1.0, 1.0}; // mm per voxel
    std::array<double, 3> origin{0.0, 0.0, 0.0};  // world mm of voxel (0,0,0)
    std::vector<float> data;                      // nx*ny*nz, x-fastest

    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * dims[1] * dims[2];
    }

    std::size_t index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * k);
    }

    float at(std::uint32_t i, std::uint32_t j, std::uint32_t k) const { return data[index(i, j, k)]; }
    float& at(std::uint32_t i, std::uint32_t j, std::uint32_t k) { return data[index(i, j, k)]; }

    Vec3 voxel_center(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
    }

    /// World-space diagonal of one voxel.
    double voxel_diagonal() const {
        return std::sqrt(spacing[0] * spacing[0] + spacing[1] * spacing[1] + spacing[2] * spacing[2]);
    }

    void validate() const {
        if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
            throw ValidationError("volume dims must be positive");
        if (!(spacing[0] > 0.0) || !(spacing[1] > 0.0) || !(spacing[2] > 0.0))
            throw ValidationError("volume spacing must be strictly positive");
        if (data.size() != voxel_count())
            throw ValidationError("volume data length does not match dims");
        for (float v : data)
            if (!std::isfinite(v)) throw ValidationError("volume contains non-finite values");
    }
};

inline Volume make_volume(std::array<std::uint32_t, 3> dims,
                          std::array<double, 3> spacing,
                          std::array<double, 3> origin,
                          float fill = 0.0f) {
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.origin = origin;
    v.data.assign(std::size_t(dims[0]) * dims[1] * dims[2], fill);
    v.validate();
    return v;
}

/// Cube-shaped volume with its center at the world origin.
inline Volume make_centered_volume(std::uint32_t n, double spacing_mm, float fill = 0.0f) {
    double o = -0.5 * (n - 1) * spacing_mm;
    return make_volume({n, n, n}, {spacing_mm, spacing_mm, spacing_mm}, {o, o, o}, fill);
}

/// Trilinear interpolation at world point p. Points outside the grid blend
/// with the padding value 0; a point at a voxel center reproduces that voxel
/// exactly.
inline double trilinear_sample(const Volume& v, const Vec3& p) {
    if (!is_finite(p)) throw ValidationError("trilinear_sample: non-finite sample point");
    double fx = (p.x - v.origin[0]) / v.spacing[0];
    double fy = (p.y - v.origin[1]) / v.spacing[1];
    double fz = (p.z - v.origin[2]) / v.spacing[2];
    double flx = std::floor(fx), fly = std::floor(fy), flz = std::floor(fz);
    std::int64_t ix = std::int64_t(flx), iy = std::int64_t(fly), iz = std::int64_t(flz);
    double tx = fx - flx, ty = fy - fly, tz = fz - flz;

    auto fetch = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> double {
        if (i < 0 || j < 0 || k < 0 || i >= v.dims[0] || j >= v.dims[1] || k >= v.dims[2]) return 0.0;
        return v.data[v.index(std::uint32_t(i), std::uint32_t(j), std::uint32_t(k))];
    };

    double c00 = fetch(ix, iy, iz) * (1 - tx) + fetch(ix + 1, iy, iz) * tx;
    double c10 = fetch(ix, iy + 1, iz) * (1 - tx) + fetch(ix + 1, iy + 1, iz) * tx;
    double c01 = fetch(ix, iy, iz + 1) * (1 - tx) + fetch(ix + 1, iy, iz + 1) * tx;
    double c11 = fetch(ix, iy + 1, iz + 1) * (1 - tx) + fetch(ix + 1, iy + 1, iz + 1) * tx;
    double c0 = c00 * (1 - ty) + c10 * ty;
    double c1 = c01 * (1 - ty) + c11 * ty;
    return c0 * (1 - tz) + c1 * tz;
}

/// Block-average downsampling by an integer factor. Output dims are
/// floor(n/factor) per axis (trailing voxels of a non-multiple are dropped),
/// spacing scales by factor, and the origin moves to the center of the first
/// block.
inline Volume downsample(const Volume& v, std::uint32_t factor) {
    if (factor < 1) throw ValidationError("downsample: factor must be >= 1");
    std::array<std::uint32_t, 3> od{v.dims[0] / factor, v.dims[1] / factor, v.dims[2] / factor};
    if (od[0] == 0 || od[1] == 0 || od[2] == 0)
        throw ValidationError("downsample: factor exceeds a volume dimension");

    Volume out;
    out.dims = od;
    out.spacing = {v.spacing[0] * factor, v.spacing[1] * factor, v.spacing[2] * factor};
    for (int a = 0; a < 3; ++a)
        out.origin[a] = v.origin[a] + 0.5 * (factor - 1) * v.spacing[a];
    out.data.resize(out.voxel_count());

    double inv = 1.0 / (double(factor) * factor * factor);
    for (std::uint32_t k = 0; k < od[2]; ++k)
        for (std::uint32_t j = 0; j < od[1]; ++j)
            for (std::uint32_t i = 0; i < od[0]; ++i) {
                double sum = 0.0;
                for (std::uint32_t dk = 0; dk < factor; ++dk)
                    for (std::uint32_t dj = 0; dj < factor; ++dj)
                        for (std::uint32_t di = 0; di < factor; ++di)
                            sum += v.at(i * factor + di, j * factor + dj, k * factor + dk);
                out.at(i, j, k) = float(sum * inv);
            }
    return out;
}

/// Affine rescale sending (min, max) to (0, 255). A constant volume has no
/// defined scale and is rejected.
inline Volume normalize_intensity(const Volume& v) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float x : v.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(hi > lo)) throw ValidationError("normalize_intensity: constant volume has no intensity range");
    double scale = 255.0 / (double(hi) - double(lo));
    Volume out = v;
    for (float& x : out.data) x = float((double(x) - double(lo)) * scale);
    return out;
}

// ---------------------------------------------------------------------------
// SVOL file format: 8-byte magic "SVOL0001", little-endian u32 nx, ny, nz,
// f64 sx, sy, sz, ox, oy, oz, then nx*ny*nz little-endian f32 values,
// x-fastest.
// ---------------------------------------------------------------------------

inline constexpr char kSvolMagic[9] = "SVOL0001";

inline void write_svol(const Volume& v, const std::string& path) {
    v.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kSvolMagic, 8);
    for (int a = 0; a < 3; ++a) write_u32(os, v.dims[a]);
    for (int a = 0; a < 3; ++a) write_f64(os, v.spacing[a]);
    for (int a = 0; a < 3; ++a) write_f64(os, v.origin[a]);
    for (float x : v.data) write_f32(os, x);
    if (!os) throw IoError("write failed: " + path);
}

inline Volume read_svol(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kSvolMagic, 8) != 0)
        throw IoError("not an SVOL file (bad magic): " + path);
    Volume v;
    try {
        for (int a = 0; a < 3; ++a) v.dims[a] = read_u32(is);
        for (int a = 0; a < 3; ++a) v.spacing[a] = read_f64(is);
        for (int a = 0; a < 3; ++a) v.origin[a] = read_f64(is);
        v.data.resize(std::size_t(v.dims[0]) * v.dims[1] * v.dims[2]);
        for (float& x : v.data) x = read_f32(is);
    } catch (const IoError&) {
        throw IoError("truncated SVOL file: " + path);
    }
    v.validate();
    return v;
}

} // namespace shapeforge
