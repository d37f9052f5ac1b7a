#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "shapeforge/core.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {

/// Thin-plate spline warp of 3D space. The 3D kernel is U(r) = r (the 2D
/// r^2 log r form does not apply in 3D). apply(p) =
/// affine·[p;1] + sum_i weights[i] * |p - control_points[i]|.
struct TpsWarp {
    std::vector<Vec3> control_points;          // P sites in the warp domain
    std::array<std::array<double, 4>, 3> affine{}; // row i: [lin_x lin_y lin_z trans]
    std::vector<Vec3> weights;                 // P kernel coefficients

    Vec3 apply(const Vec3& p) const {
        Vec3 out;
        for (int i = 0; i < 3; ++i)
            out[i] = affine[std::size_t(i)][0] * p.x + affine[std::size_t(i)][1] * p.y +
                     affine[std::size_t(i)][2] * p.z + affine[std::size_t(i)][3];
        for (std::size_t i = 0; i < control_points.size(); ++i)
            out += weights[i] * norm(p - control_points[i]);
        return out;
    }

    /// The kernel part must vanish at infinity direction-independently:
    /// sum w = 0 and sum w x siteᵀ = 0. These hold by construction of the
    /// fitting system; validate guards deserialized or hand-built warps.
    void validate() const {
        if (weights.size() != control_points.size())
            throw ValidationError("tps warp: weights/control point count mismatch");
        Vec3 s{0, 0, 0};
        for (const auto& w : weights) s += w;
        if (norm(s) > 1e-8) throw ValidationError("tps warp: weights do not sum to zero");
        double m[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const Vec3 &w = weights[i], &c = control_points[i];
            m[0] += w.x * c.x; m[1] += w.x * c.y; m[2] += w.x * c.z;
            m[3] += w.y * c.x; m[4] += w.y * c.y; m[5] += w.y * c.z;
            m[6] += w.z * c.x; m[7] += w.z * c.y; m[8] += w.z * c.z;
        }
        for (double v : m)
            if (std::abs(v) > 1e-8)
                throw ValidationError("tps warp: first-moment side condition violated");
    }
};

/// Fits the TPS mapping from_points[i] -> to_points[i] by solving
///   [[K + reg*I, Q], [Qᵀ, 0]] [w; a] = [to; 0]
/// where K_ij = |from_i - from_j| and Q = [1 | from]. With reg = 0 the warp
/// interpolates the sites exactly.
inline TpsWarp fit_tps(const CorrespondenceSet& from_points, const CorrespondenceSet& to_points,
                       double regularization = 0.0) {
    const std::size_t p = from_points.size();
    if (p != to_points.size()) throw ValidationError("fit_tps: point counts differ");
    if (p < 4) throw ValidationError("fit_tps: need at least 4 sites");
    if (regularization < 0) throw ValidationError("fit_tps: regularization must be >= 0");
    from_points.validate();
    to_points.validate();

    const std::size_t n = p + 4;
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(Eigen::Index(n), 3);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            sys(Eigen::Index(i), Eigen::Index(j)) = norm(from_points.points[i] - from_points.points[j]);
        sys(Eigen::Index(i), Eigen::Index(i)) += regularization;
        const Vec3& c = from_points.points[i];
        sys(Eigen::Index(i), Eigen::Index(p)) = 1.0;
        sys(Eigen::Index(i), Eigen::Index(p + 1)) = c.x;
        sys(Eigen::Index(i), Eigen::Index(p + 2)) = c.y;
        sys(Eigen::Index(i), Eigen::Index(p + 3)) = c.z;
        sys(Eigen::Index(p), Eigen::Index(i)) = 1.0;
        sys(Eigen::Index(p + 1), Eigen::Index(i)) = c.x;
        sys(Eigen::Index(p + 2), Eigen::Index(i)) = c.y;
        sys(Eigen::Index(p + 3), Eigen::Index(i)) = c.z;
        const Vec3& t = to_points.points[i];
        rhs(Eigen::Index(i), 0) = t.x;
        rhs(Eigen::Index(i), 1) = t.y;
        rhs(Eigen::Index(i), 2) = t.z;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible())
        throw ValidationError("fit_tps: singular system (coplanar or duplicated sites)");
    Eigen::MatrixXd sol = lu.solve(rhs);

    TpsWarp warp;
    warp.control_points = from_points.points;
    warp.weights.resize(p);
    for (std::size_t i = 0; i < p; ++i)
        warp.weights[i] = {sol(Eigen::Index(i), 0), sol(Eigen::Index(i), 1), sol(Eigen::Index(i), 2)};
    for (int d = 0; d < 3; ++d) {
        warp.affine[std::size_t(d)][3] = sol(Eigen::Index(p), d);       // constant term
        warp.affine[std::size_t(d)][0] = sol(Eigen::Index(p + 1), d);   // x coefficient
        warp.affine[std::size_t(d)][1] = sol(Eigen::Index(p + 2), d);
        warp.affine[std::size_t(d)][2] = sol(Eigen::Index(p + 3), d);
    }
    return warp;
}

/// Pulls intensities backward through the warp: for each output voxel center
/// x, output(x) = source sampled at warp(x). The warp must therefore map the
/// *output* shape's geometry onto the *source* shape's geometry.
inline Volume warp_volume(const TpsWarp& warp, const Volume& source,
                          const Volume& out_geometry, int workers = 1) {
    Volume out;
    out.dims = out_geometry.dims;
    out.spacing = out_geometry.spacing;
    out.origin = out_geometry.origin;
    out.data.resize(out.voxel_count());
    const std::uint32_t nx = out.dims[0], ny = out.dims[1], nz = out.dims[2];
    parallel_for(nz, workers, [&](std::size_t k) {
        for (std::uint32_t j = 0; j < ny; ++j)
            for (std::uint32_t i = 0; i < nx; ++i) {
                Vec3 x = out.voxel_center(i, std::uint32_t(j), std::uint32_t(k));
                out.at(i, j, std::uint32_t(k)) = float(trilinear_sample(source, warp.apply(x)));
            }
    });
    return out;
}

} // namespace shapeforge
