#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shapeforge/core.hpp"

namespace shapeforge {

/// Ordered 3D correspondence points; index i means the same anatomical
/// location on every shape of a study.
struct CorrespondenceSet {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }

    void validate() const {
        if (points.empty()) throw ValidationError("correspondence set is empty");
        for (const auto& p : points)
            if (!is_finite(p)) throw ValidationError("correspondence set has non-finite point");
    }
};

inline std::vector<double> flatten(const CorrespondenceSet& c) {
    std::vector<double> v(3 * c.points.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        v[3 * i] = c.points[i].x;
        v[3 * i + 1] = c.points[i].y;
        v[3 * i + 2] = c.points[i].z;
    }
    return v;
}

inline CorrespondenceSet unflatten(const std::vector<double>& v) {
    if (v.size() % 3 != 0) throw ValidationError("flat vector length is not a multiple of 3");
    CorrespondenceSet c;
    c.points.resize(v.size() / 3);
    for (std::size_t i = 0; i < c.points.size(); ++i)
        c.points[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    return c;
}

/// Unwhitened PCA coefficients, in mm.
using Loadings = std::vector<double>;

/// Linear point-distribution shape space: x ≈ mean + modesᵀ · loadings.
/// modes is M x 3P row-major with orthonormal rows; eigenvalues are the
/// per-mode variances (mm²), descending.
struct ShapeSpace {
    std::size_t num_points = 0;            // P
    std::vector<double> mean;              // 3P
    std::vector<double> modes;             // M * 3P, row-major
    std::vector<double> eigenvalues;       // M, descending
    double total_variance = 0.0;           // sum over all covariance eigenvalues

    std::size_t dim() const { return eigenvalues.size(); }       // M
    std::size_t flat_size() const { return 3 * num_points; }     // 3P

    /// Floor below which a variance is considered numerically zero.
    double eigen_floor() const { return 1e-12 * total_variance; }

    void validate() const {
        if (mean.size() != flat_size()) throw ValidationError("shape space mean has wrong length");
        if (modes.size() != dim() * flat_size())
            throw ValidationError("shape space modes have wrong extent");
        for (std::size_t a = 0; a < dim(); ++a) {
            if (eigenvalues[a] < 0) throw ValidationError("negative eigenvalue in shape space");
            if (a > 0 && eigenvalues[a] > eigenvalues[a - 1])
                throw ValidationError("shape space eigenvalues not descending");
            for (std::size_t b = a; b < dim(); ++b) {
                double d = 0;
                for (std::size_t i = 0; i < flat_size(); ++i)
                    d += modes[a * flat_size() + i] * modes[b * flat_size() + i];
                double want = a == b ? 1.0 : 0.0;
                if (std::abs(d - want) > 1e-8)
                    throw ValidationError("shape space modes are not orthonormal");
            }
        }
    }
};

/// PCA over correspondence vectors. Covariance uses divisor N-1 and is
/// eigendecomposed through the N x N Gram matrix (N shapes is far smaller
/// than 3P coordinates). Retains the smallest M whose cumulative variance
/// fraction reaches variance_target, capped at max_modes; variances at or
/// below the numeric floor are never retained. Each mode's
/// largest-magnitude entry is made positive so serialized spaces are
/// reproducible.
inline ShapeSpace build_pca(const std::vector<CorrespondenceSet>& shapes, double variance_target,
                            std::size_t max_modes = SIZE_MAX) {
    if (shapes.size() < 2) throw ValidationError("build_pca: need at least 2 shapes");
    if (!(variance_target > 0.0) || variance_target > 1.0)
        throw ValidationError("build_pca: variance_target must lie in (0, 1]");
    const std::size_t n = shapes.size();
    const std::size_t p = shapes[0].size();
    for (const auto& s : shapes) {
        s.validate();
        if (s.size() != p) throw ValidationError("build_pca: shapes have mismatched point counts");
    }
    const std::size_t d = 3 * p;

    ShapeSpace ss;
    ss.num_points = p;
    ss.mean.assign(d, 0.0);
    std::vector<std::vector<double>> flat(n);
    for (std::size_t i = 0; i < n; ++i) {
        flat[i] = flatten(shapes[i]);
        for (std::size_t j = 0; j < d; ++j) ss.mean[j] += flat[i][j];
    }
    for (double& m : ss.mean) m /= double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) flat[i][j] -= ss.mean[j];

    // Gram matrix of centered rows with the covariance divisor folded in:
    // its nonzero spectrum equals the sample covariance spectrum.
    Eigen::MatrixXd gram(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a; b < n; ++b) {
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) s += flat[a][j] * flat[b][j];
            s /= double(n - 1);
            gram(Eigen::Index(a), Eigen::Index(b)) = s;
            gram(Eigen::Index(b), Eigen::Index(a)) = s;
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("build_pca: eigendecomposition failed");

    // ascending from Eigen; clamp numeric noise, reorder descending
    std::vector<double> lam(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) lam[i] = std::max(0.0, eig.eigenvalues()(Eigen::Index(i)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lam[a] > lam[b]; });

    ss.total_variance = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss.total_variance += lam[order[i]];

    std::size_t m = 0;
    if (ss.total_variance > 0.0) {
        double cum = 0.0;
        const double floor = 1e-12 * ss.total_variance;
        for (std::size_t i = 0; i < n && m < max_modes && m + 1 < n; ++i) {
            if (lam[order[i]] <= floor) break;
            cum += lam[order[i]];
            ++m;
            if (cum >= variance_target * ss.total_variance) break;
        }
    }

    ss.eigenvalues.resize(m);
    ss.modes.assign(m * d, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double lk = lam[order[k]];
        ss.eigenvalues[k] = lk;
        // covariance eigenvector from the Gram eigenvector u: Xᵀu / sqrt((n-1)λ)
        double scale = 1.0 / std::sqrt(double(n - 1) * lk);
        double* mode = &ss.modes[k * d];
        for (std::size_t i = 0; i < n; ++i) {
            double u = eig.eigenvectors()(Eigen::Index(i), Eigen::Index(order[k]));
            if (u == 0.0) continue;
            double w = u * scale;
            for (std::size_t j = 0; j < d; ++j) mode[j] += w * flat[i][j];
        }
        // sign convention: largest-magnitude entry positive
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(mode[j]) > std::abs(mode[arg])) arg = j;
        if (mode[arg] < 0)
            for (std::size_t j = 0; j < d; ++j) mode[j] = -mode[j];
    }
    return ss;
}

inline Loadings project(const ShapeSpace& ss, const CorrespondenceSet& shape) {
    if (shape.size() != ss.num_points)
        throw ValidationError("project: shape point count does not match space");
    std::vector<double> x = flatten(shape);
    const std::size_t d = ss.flat_size();
    for (std::size_t j = 0; j < d; ++j) x[j] -= ss.mean[j];
    Loadings l(ss.dim());
    for (std::size_t k = 0; k < ss.dim(); ++k) {
        double s = 0;
        const double* mode = &ss.modes[k * d];
        for (std::size_t j = 0; j < d; ++j) s += mode[j] * x[j];
        l[k] = s;
    }
    return l;
}

inline CorrespondenceSet reconstruct(const ShapeSpace& ss, const Loadings& l) {
    if (l.size() != ss.dim()) throw ValidationError("reconstruct: loadings length does not match space");
    const std::size_t d = ss.flat_size();
    std::vector<double> x = ss.mean;
    for (std::size_t k = 0; k < ss.dim(); ++k) {
        const double* mode = &ss.modes[k * d];
        double c = l[k];
        for (std::size_t j = 0; j < d; ++j) x[j] += c * mode[j];
    }
    return unflatten(x);
}

/// sqrt( sum coeffs_k^2 / lambda_k ) over the retained modes.
inline double mahalanobis(const ShapeSpace& ss, const Loadings& l) {
    if (l.size() != ss.dim())
        throw ValidationError("mahalanobis: loadings length does not match space");
    double s = 0;
    for (std::size_t k = 0; k < ss.dim(); ++k) {
        if (ss.eigenvalues[k] <= ss.eigen_floor())
            throw ValidationError("mahalanobis: mode " + std::to_string(k) +
                                  " variance is below the numeric floor");
        s += l[k] * l[k] / ss.eigenvalues[k];
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Correspondence CSV: one `x,y,z` line per point.
// ---------------------------------------------------------------------------

inline void write_correspondences(const CorrespondenceSet& c, const std::string& path) {
    c.validate();
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& p : c.points)
        os << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(p.z) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

inline CorrespondenceSet read_correspondences(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    CorrespondenceSet c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        Vec3 p;
        char c1 = 0, c2 = 0;
        if (!(ss >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',')
            throw IoError(path + ":" + std::to_string(lineno) + ": expected `x,y,z`");
        std::string rest;
        if (ss >> rest) throw IoError(path + ":" + std::to_string(lineno) + ": trailing junk");
        c.points.push_back(p);
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Shape space container: magic "SSPC0001", little-endian u32 P, M, then f64
// mean (3P), eigenvalues (M), modes (M*3P row-major). total_variance is
// stored after the header (f64) so Mahalanobis floors survive a round trip.
// ---------------------------------------------------------------------------

inline constexpr char kSspcMagic[9] = "SSPC0001";

inline void write_shape_space(const ShapeSpace& ss, const std::string& path) {
    ss.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kSspcMagic, 8);
    write_u32(os, std::uint32_t(ss.num_points));
    write_u32(os, std::uint32_t(ss.dim()));
    write_f64(os, ss.total_variance);
    for (double v : ss.mean) write_f64(os, v);
    for (double v : ss.eigenvalues) write_f64(os, v);
    for (double v : ss.modes) write_f64(os, v);
    if (!os) throw IoError("write failed: " + path);
}

inline ShapeSpace read_shape_space(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kSspcMagic, 8) != 0)
        throw IoError("not a shape space file (bad magic): " + path);
    ShapeSpace ss;
    try {
        ss.num_points = read_u32(is);
        std::uint32_t m = read_u32(is);
        ss.total_variance = read_f64(is);
        ss.mean.resize(3 * ss.num_points);
        for (double& v : ss.mean) v = read_f64(is);
        ss.eigenvalues.resize(m);
        for (double& v : ss.eigenvalues) v = read_f64(is);
        ss.modes.resize(std::size_t(m) * 3 * ss.num_points);
        for (double& v : ss.modes) v = read_f64(is);
    } catch (const IoError&) {
        throw IoError("truncated shape space file: " + path);
    }
    ss.validate();
    return ss;
}

} // namespace shapeforge
