#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "shapeforge/core.hpp"

namespace shapeforge {

/// Indexed triangle mesh with vertices in world millimeters.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;

    void validate() const {
        for (const auto& f : faces)
            for (std::uint32_t vi : f)
                if (vi >= vertices.size()) throw ValidationError("mesh face references missing vertex");
        for (const auto& v : vertices)
            if (!is_finite(v)) throw ValidationError("mesh contains non-finite vertex");
    }
};

/// Drops faces that reference the same vertex index more than once.
inline void drop_degenerate_faces(TriMesh& m) {
    std::vector<std::array<std::uint32_t, 3>> kept;
    kept.reserve(m.faces.size());
    for (const auto& f : m.faces)
        if (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]) kept.push_back(f);
    m.faces = std::move(kept);
}

/// Closest point to p on triangle (a,b,c), by classifying p against the
/// triangle's Voronoi regions (vertices, edges, interior).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        double t = d1 / (d1 - d3);
        return a + ab * t;
    }

    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        double t = d2 / (d2 - d6);
        return a + ac * t;
    }

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * t;
    }

    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return a + ab * v + ac * w;
}

/// Closest point to p over all mesh triangles (exhaustive scan; meshes here
/// stay in the tens of thousands of faces). Ties keep the lowest face index.
inline Vec3 closest_point_on_mesh(const TriMesh& m, const Vec3& p) {
    if (m.faces.empty()) throw ValidationError("closest_point_on_mesh: mesh has no faces");
    Vec3 best{0, 0, 0};
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const auto& f : m.faces) {
        Vec3 q = closest_point_on_triangle(p, m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]);
        double d2 = norm2(q - p);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = q;
        }
    }
    return best;
}

/// Distance from p to the mesh surface.
inline double distance_to_mesh(const TriMesh& m, const Vec3& p) {
    return norm(closest_point_on_mesh(m, p) - p);
}

// ---------------------------------------------------------------------------
// OBJ subset: `v x y z` and `f i j k` (1-based indices) lines; `#` comments
// and blank lines are ignored; anything else is rejected.
// ---------------------------------------------------------------------------

inline void write_obj(const TriMesh& m, const std::string& path) {
    m.validate();
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& v : m.vertices)
        os << "v " << fmt_double(v.x) << ' ' << fmt_double(v.y) << ' ' << fmt_double(v.z) << '\n';
    for (const auto& f : m.faces)
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!os) throw IoError("write failed: " + path);
}

inline TriMesh read_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    TriMesh m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue; // blank
        if (tag[0] == '#') continue;
        auto fail = [&](const std::string& why) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + why);
        };
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x >> v.y >> v.z)) fail("malformed vertex line");
            m.vertices.push_back(v);
        } else if (tag == "f") {
            long long i, j, k;
            if (!(ss >> i >> j >> k)) fail("malformed face line");
            if (i < 1 || j < 1 || k < 1) fail("face indices must be 1-based positive");
            m.faces.push_back({std::uint32_t(i - 1), std::uint32_t(j - 1), std::uint32_t(k - 1)});
        } else {
            fail("unsupported OBJ element '" + tag + "'");
        }
    }
    m.validate();
    return m;
}

} // namespace shapeforge
