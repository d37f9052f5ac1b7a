#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shapeforge/core.hpp"
#include "shapeforge/mesh.hpp"

namespace shapeforge {

/// Proper rigid motion p -> R*p + t.
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    RigidTransform inverse() const {
        Mat3 rt = rotation.transposed();
        return {rt, -(rt * translation)};
    }

    /// this ∘ other: apply `other` first, then this.
    RigidTransform compose(const RigidTransform& other) const {
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    void validate() const {
        Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9)
                    throw ValidationError("rigid transform rotation is not orthonormal");
        if (std::abs(rotation.det() - 1.0) > 1e-9)
            throw ValidationError("rigid transform rotation is not proper (det != +1)");
        if (!is_finite(translation)) throw ValidationError("rigid transform translation not finite");
    }
};

/// 12 ASCII floats: row-major rotation, then translation.
inline std::string rigid_to_string(const RigidTransform& t) {
    std::ostringstream os;
    for (int i = 0; i < 9; ++i) os << fmt_double(t.rotation.m[std::size_t(i)]) << ' ';
    os << fmt_double(t.translation.x) << ' ' << fmt_double(t.translation.y) << ' '
       << fmt_double(t.translation.z);
    return os.str();
}

inline RigidTransform rigid_from_string(const std::string& s) {
    std::istringstream is(s);
    RigidTransform t;
    for (int i = 0; i < 9; ++i)
        if (!(is >> t.rotation.m[std::size_t(i)])) throw IoError("rigid transform needs 12 numbers");
    if (!(is >> t.translation.x >> t.translation.y >> t.translation.z))
        throw IoError("rigid transform needs 12 numbers");
    t.validate();
    return t;
}

/// Least-squares rigid fit: the proper rotation and translation minimizing
/// sum |R*source[i] + t - target[i]|^2, via SVD of the 3x3 cross-covariance
/// with a determinant sign fix so reflections are never returned.
inline RigidTransform kabsch_fit(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
    if (source.size() != target.size())
        throw ValidationError("kabsch_fit: point counts differ");
    if (source.size() < 3) throw ValidationError("kabsch_fit: need at least 3 point pairs");

    const double n = double(source.size());
    Vec3 sc{0, 0, 0}, tc{0, 0, 0};
    for (const auto& p : source) sc += p;
    for (const auto& p : target) tc += p;
    sc = sc / n;
    tc = tc / n;

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        Vec3 s = source[i] - sc, t = target[i] - tc;
        Eigen::Vector3d es(s.x, s.y, s.z), et(t.x, t.y, t.z);
        h += es * et.transpose();
    }

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d sig = svd.singularValues();
    // A collinear (or coincident) point cloud leaves the rotation about its
    // axis undetermined.
    if (!(sig(0) > 0.0) || sig(1) / sig(0) < 1e-9)
        throw ValidationError("kabsch_fit: rank-deficient cross-covariance (collinear points)");

    Eigen::Matrix3d vu = svd.matrixV() * svd.matrixU().transpose();
    double d = vu.determinant() < 0 ? -1.0 : 1.0;
    Eigen::Matrix3d r = svd.matrixV() * Eigen::Vector3d(1, 1, d).asDiagonal() * svd.matrixU().transpose();

    RigidTransform out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.rotation(i, j) = r(i, j);
    out.translation = tc - out.rotation * sc;
    return out;
}

struct IcpResult {
    RigidTransform transform;
    double final_rms = 0.0;
    std::vector<double> rms_history; // entry 0 = initial assignment, then one per iteration
};

namespace detail {

inline double assignment_rms(const std::vector<Vec3>& points, const RigidTransform& t,
                             const TriMesh& m, std::vector<Vec3>& targets, int workers) {
    targets.resize(points.size());
    std::vector<double> d2(points.size());
    parallel_for(points.size(), workers, [&](std::size_t i) {
        Vec3 p = t.apply(points[i]);
        targets[i] = closest_point_on_mesh(m, p);
        d2[i] = norm2(targets[i] - p);
    });
    double sum = 0;
    for (double v : d2) sum += v; // fixed order, worker-count independent
    return std::sqrt(sum / double(points.size()));
}

} // namespace detail

/// Point-to-mesh ICP: alternates closest-point assignment with a full rigid
/// refit of the original points onto the assigned targets. The recorded RMS
/// sequence is non-increasing by construction (each reassignment and each
/// refit can only lower the objective). Initialization aligns the point
/// centroid with the mesh vertex centroid; with max_iters = 0 the transform
/// stays the identity and only the initial RMS is reported.
inline IcpResult icp_to_mesh(const std::vector<Vec3>& points, const TriMesh& m, int max_iters,
                             double tol = 1e-6, int workers = 1) {
    if (points.empty()) throw ValidationError("icp_to_mesh: no points");
    if (m.faces.empty()) throw ValidationError("icp_to_mesh: mesh has no faces");

    IcpResult res;
    std::vector<Vec3> targets;

    if (max_iters == 0) {
        res.final_rms = detail::assignment_rms(points, res.transform, m, targets, workers);
        res.rms_history.push_back(res.final_rms);
        return res;
    }

    // Initialize with whichever assigns better: the identity, or the
    // translation aligning the point centroid with the mesh vertex centroid.
    // Gross offsets get centered while an already-aligned cloud is left
    // exactly where it is.
    Vec3 pc{0, 0, 0}, mc{0, 0, 0};
    for (const auto& p : points) pc += p;
    pc = pc / double(points.size());
    for (const auto& v : m.vertices) mc += v;
    mc = mc / double(m.vertices.size());
    RigidTransform centered;
    centered.translation = mc - pc;

    std::vector<Vec3> targets_centered;
    double rms_identity = detail::assignment_rms(points, res.transform, m, targets, workers);
    double rms_centered = detail::assignment_rms(points, centered, m, targets_centered, workers);
    double prev = rms_identity;
    if (rms_centered < rms_identity) {
        res.transform = centered;
        prev = rms_centered;
        targets = std::move(targets_centered);
    }
    res.rms_history.push_back(prev);

    for (int iter = 0; iter < max_iters; ++iter) {
        // `targets` currently holds the closest points under res.transform
        RigidTransform refit;
        try {
            refit = kabsch_fit(points, targets);
        } catch (const ValidationError& e) {
            throw ValidationError("icp_to_mesh: iteration " + std::to_string(iter) + ": " + e.what());
        }
        res.transform = refit;
        double rms = detail::assignment_rms(points, res.transform, m, targets, workers);
        res.rms_history.push_back(rms);
        double improvement = prev - rms;
        prev = rms;
        if (improvement < tol) break;
    }
    res.final_rms = prev;
    return res;
}

} // namespace shapeforge
