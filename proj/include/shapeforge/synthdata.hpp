#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "shapeforge/core.hpp"
#include "shapeforge/marching_cubes.hpp"
#include "shapeforge/mesh.hpp"
#include "shapeforge/rng.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {

/// Smooth angular basis for the texture term of the shape family: real
/// degree-2 and degree-3 harmonics scaled to unit rms over the sphere, so a
/// coefficient of t mm produces a radial ripple of t mm rms. Degree-1 terms
/// are deliberately excluded (they approximate translations).
inline constexpr std::size_t kNumTextureBasis = 12;

inline double texture_basis(std::size_t k, const Vec3& u) {
    const double x = u.x, y = u.y, z = u.z;
    switch (k) {
        case 0: return 3.872983346207417 * x * y;                    // sqrt(15) xy
        case 1: return 3.872983346207417 * y * z;                    // sqrt(15) yz
        case 2: return 1.118033988749895 * (3 * z * z - 1);          // sqrt(5)/2 (3z^2-1)
        case 3: return 3.872983346207417 * z * x;                    // sqrt(15) zx
        case 4: return 1.9364916731037085 * (x * x - y * y);         // sqrt(15)/2 (x^2-y^2)
        case 5: return 1.3228756555322954 * z * (5 * z * z - 3);     // sqrt(7)/2 z(5z^2-3)
        case 6: return 1.6201851746019651 * x * (5 * z * z - 1);     // sqrt(21/8) x(5z^2-1)
        case 7: return 1.6201851746019651 * y * (5 * z * z - 1);     // sqrt(21/8) y(5z^2-1)
        case 8: return 5.123475382979799 * z * (x * x - y * y);      // sqrt(105)/2 z(x^2-y^2)
        case 9: return 10.246950765959598 * x * y * z;               // sqrt(105) xyz
        case 10: return 2.0916500663351889 * x * (x * x - 3 * y * y); // sqrt(35/8) x(x^2-3y^2)
        case 11: return 2.0916500663351889 * y * (3 * x * x - y * y); // sqrt(35/8) y(3x^2-y^2)
        default: throw ValidationError("texture_basis: index out of range");
    }
}

/// A star-shaped surface: ellipsoid radial profile, a smooth per-shape
/// radial texture over the harmonic basis above (this is what gives the
/// population enough independent variation for a realistic PCA spectrum),
/// plus one localized radial bump (the out-of-distribution pathology
/// analog).
struct ShapeParams {
    double semi_a = 0, semi_b = 0, semi_c = 0; // mm
    std::vector<double> texture;               // mm, one per basis function; may be empty
    double bump_amplitude = 0.0;               // mm, >= 0
    Vec3 bump_direction{0, 0, 1};              // unit
    double bump_width = 0.45;                  // radians

    void validate() const {
        if (!(semi_a > 0) || !(semi_b > 0) || !(semi_c > 0))
            throw ValidationError("shape params: semi-axes must be positive");
        if (texture.size() > kNumTextureBasis)
            throw ValidationError("shape params: too many texture coefficients");
        for (double t : texture)
            if (!std::isfinite(t)) throw ValidationError("shape params: non-finite texture");
        if (bump_amplitude < 0) throw ValidationError("shape params: bump amplitude must be >= 0");
        if (!(bump_width > 0)) throw ValidationError("shape params: bump width must be positive");
        if (std::abs(norm(bump_direction) - 1.0) > 1e-9)
            throw ValidationError("shape params: bump direction must be a unit vector");
    }
};

struct RenderParams {
    double foreground = 200.0;
    double background = 30.0;
    double edge_softness = 2.5; // mm
    double noise_sigma = 4.0;
    double gain = 1.0;
    double bias = 0.0;

    void validate() const {
        if (!(edge_softness > 0)) throw ValidationError("render params: edge softness must be positive");
        if (noise_sigma < 0) throw ValidationError("render params: noise sigma must be >= 0");
    }
};

/// Direction i of P on the Fibonacci sphere: evenly wound spiral with
/// z_i = 1 - (2i+1)/P and azimuth i times the golden angle pi*(3 - sqrt 5).
inline Vec3 fibonacci_direction(std::size_t i, std::size_t total) {
    double z = 1.0 - (2.0 * double(i) + 1.0) / double(total);
    double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = double(i) * (3.14159265358979323846 * (3.0 - std::sqrt(5.0)));
    return {rho * std::cos(phi), rho * std::sin(phi), z};
}

/// Surface radius along unit direction u.
inline double shape_radius(const ShapeParams& p, const Vec3& u) {
    double q = (u.x / p.semi_a) * (u.x / p.semi_a) + (u.y / p.semi_b) * (u.y / p.semi_b) +
               (u.z / p.semi_c) * (u.z / p.semi_c);
    double r = 1.0 / std::sqrt(q);
    for (std::size_t k = 0; k < p.texture.size(); ++k)
        if (p.texture[k] != 0) r += p.texture[k] * texture_basis(k, u);
    if (p.bump_amplitude > 0) {
        double theta = std::acos(std::clamp(dot(u, p.bump_direction), -1.0, 1.0));
        r += p.bump_amplitude * std::exp(-theta * theta / (p.bump_width * p.bump_width));
    }
    return r;
}

/// Correspondence points: the surface point along each Fibonacci direction.
/// The directions are the same for every shape, which is what makes point i
/// correspond across the study.
inline CorrespondenceSet make_shape(const ShapeParams& p, std::size_t num_points) {
    p.validate();
    if (num_points < 4) throw ValidationError("make_shape: need at least 4 points");
    CorrespondenceSet c;
    c.points.resize(num_points);
    for (std::size_t i = 0; i < num_points; ++i) {
        Vec3 u = fibonacci_direction(i, num_points);
        c.points[i] = u * shape_radius(p, u);
    }
    return c;
}

/// Radial signed distance: f(x) = |x| - radius(x/|x|), negative inside.
/// Exact for spheres; for anisotropic shapes it is a monotone surrogate of
/// Euclidean distance whose magnitude overestimates by at most the axis
/// ratio max(a,b,c)/min(a,b,c) near the surface (the zero level set is
/// always exact).
inline double shape_signed_distance(const ShapeParams& p, const Vec3& x) {
    double r = norm(x);
    if (r < 1e-12) return -shape_radius(p, {0, 0, 1});
    return r - shape_radius(p, x / r);
}

inline Volume shape_sdf_volume(const ShapeParams& p, const Volume& geometry) {
    p.validate();
    Volume out;
    out.dims = geometry.dims;
    out.spacing = geometry.spacing;
    out.origin = geometry.origin;
    out.data.resize(out.voxel_count());
    for (std::uint32_t k = 0; k < out.dims[2]; ++k)
        for (std::uint32_t j = 0; j < out.dims[1]; ++j)
            for (std::uint32_t i = 0; i < out.dims[0]; ++i)
                out.at(i, j, k) = float(shape_signed_distance(p, out.voxel_center(i, j, k)));
    return out;
}

/// Image formation: a soft shell profile between background (outside) and
/// foreground (inside) with transition band edge_softness, then gain/bias,
/// then i.i.d. Gaussian noise drawn voxel-by-voxel in index order from rng.
inline Volume render_volume(const ShapeParams& p, const RenderParams& rp, const Volume& geometry,
                            Rng& rng) {
    p.validate();
    rp.validate();
    Volume out;
    out.dims = geometry.dims;
    out.spacing = geometry.spacing;
    out.origin = geometry.origin;
    out.data.resize(out.voxel_count());
    for (std::uint32_t k = 0; k < out.dims[2]; ++k)
        for (std::uint32_t j = 0; j < out.dims[1]; ++j)
            for (std::uint32_t i = 0; i < out.dims[0]; ++i) {
                double sdf = shape_signed_distance(p, out.voxel_center(i, j, k));
                double t = std::clamp(-sdf / rp.edge_softness, 0.0, 1.0);
                double s = t * t * (3.0 - 2.0 * t); // smoothstep
                double value = rp.bias + rp.gain * (rp.background + (rp.foreground - rp.background) * s);
                if (rp.noise_sigma > 0) value += rng.normal(0.0, rp.noise_sigma);
                out.at(i, j, k) = float(value);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Study generation
// ---------------------------------------------------------------------------

enum class Split { PdmTrain, HeldOut, UnseenNormal, UnseenPathological };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::PdmTrain: return "pdm-train";
        case Split::HeldOut: return "held-out";
        case Split::UnseenNormal: return "unseen-normal";
        case Split::UnseenPathological: return "unseen-pathological";
    }
    throw Error("unreachable split");
}

inline Split split_from_name(const std::string& s) {
    if (s == "pdm-train") return Split::PdmTrain;
    if (s == "held-out") return Split::HeldOut;
    if (s == "unseen-normal") return Split::UnseenNormal;
    if (s == "unseen-pathological") return Split::UnseenPathological;
    throw IoError("unknown split name: " + s);
}

/// Population distributions and geometry for one synthetic study.
struct StudyParams {
    std::size_t num_points = 256;   // correspondences per shape
    std::uint32_t volume_dim = 32;  // cubic volume extent in voxels
    double spacing = 2.0;           // mm per voxel

    // semi-axis population: per-axis Gaussians, clamped to [axis_lo, axis_hi]
    double axes_mean[3] = {16.5, 14.0, 12.0};
    double axes_sigma[3] = {2.4, 2.0, 1.7};
    double axis_lo = 7.0;
    double axis_hi = 22.0;

    // per-mode texture sigmas (mm rms of radial ripple); the decaying ladder
    // shapes the tail of the population's PCA spectrum
    std::vector<double> texture_sigmas = {0.225, 0.205, 0.187, 0.170, 0.158, 0.147,
                                          0.137, 0.128, 0.119, 0.111, 0.104, 0.097};

    // pathology: localized bump, amplitude strictly positive
    double bump_amp_lo = 3.0;
    double bump_amp_hi = 5.5;
    Vec3 bump_center_direction = {0.5773502691896258, 0.5773502691896258, 0.5773502691896258};
    double bump_direction_jitter = 0.08; // radians worth of directional scatter
    double bump_width = 0.45;            // radians

    // appearance: per-sample uniform draws
    double fg_lo = 160.0, fg_hi = 220.0;
    double bg_lo = 20.0, bg_hi = 60.0;
    double edge_softness = 2.5;
    double noise_lo = 2.0, noise_hi = 6.0;
    double gain_lo = 0.9, gain_hi = 1.1;
    double bias_lo = -10.0, bias_hi = 10.0;

    // split sizes carved off the normal population (rest is pdm-train)
    std::size_t n_held_out = 10;
    std::size_t n_unseen_normal = 10;

    void validate() const {
        if (num_points < 4) throw ValidationError("study: need at least 4 correspondence points");
        if (volume_dim < 4) throw ValidationError("study: volume dim too small");
        if (!(spacing > 0)) throw ValidationError("study: spacing must be positive");
        for (int a = 0; a < 3; ++a)
            if (!(axes_sigma[a] >= 0) || !(axes_mean[a] > 0))
                throw ValidationError("study: bad axis distribution");
        if (!(axis_lo > 0) || axis_hi < axis_lo) throw ValidationError("study: bad axis clamp range");
        if (texture_sigmas.size() > kNumTextureBasis)
            throw ValidationError("study: too many texture sigmas");
        double texture_var = 0;
        for (double t : texture_sigmas) {
            if (!(t >= 0) || !std::isfinite(t)) throw ValidationError("study: bad texture sigma");
            texture_var += t * t;
        }
        if (!(bump_amp_lo > 0) || bump_amp_hi < bump_amp_lo)
            throw ValidationError("study: bump amplitude range must be strictly positive");
        if (!(bump_width > 0)) throw ValidationError("study: bump width must be positive");
        if (std::abs(norm(bump_center_direction) - 1.0) > 1e-6)
            throw ValidationError("study: bump center direction must be unit length");
        // the largest plausible shape must fit inside the volume; texture
        // ripple gets a 4-sigma allowance on top of the hard axis/bump caps
        double half_extent = 0.5 * double(volume_dim) * spacing;
        if (axis_hi + bump_amp_hi + 4.0 * std::sqrt(texture_var) > 0.95 * half_extent)
            throw ValidationError("study: shapes can exceed the volume extent");
    }

    Volume geometry() const { return make_centered_volume(volume_dim, spacing); }
};

struct StudySample {
    std::string id;
    Split split = Split::PdmTrain;
    ShapeParams shape;
    RenderParams render;
    std::uint64_t stream = 0; // rng stream id the sample was drawn with
    CorrespondenceSet correspondences;
    Volume image;
    TriMesh mesh;
};

struct Study {
    StudyParams params;
    std::vector<StudySample> samples;

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].split == s) out.push_back(i);
        return out;
    }
};

namespace detail {

/// Per-sample draws, in a fixed documented order so streams are stable:
/// 3 axis normals; one normal per texture sigma; for pathological shapes 1
/// amplitude uniform and 3 direction normals; 5 appearance uniforms; then
/// the render noise field.
inline StudySample make_study_sample(const StudyParams& sp, std::size_t index, Split split,
                                     bool pathological, Rng rng) {
    StudySample s;
    {
        std::ostringstream os;
        os << 's' << std::setw(4) << std::setfill('0') << index;
        s.id = os.str();
    }
    s.split = split;

    for (int a = 0; a < 3; ++a) {
        double v = rng.normal(sp.axes_mean[a], sp.axes_sigma[a]);
        double* axis = a == 0 ? &s.shape.semi_a : (a == 1 ? &s.shape.semi_b : &s.shape.semi_c);
        *axis = std::clamp(v, sp.axis_lo, sp.axis_hi);
    }
    s.shape.texture.resize(sp.texture_sigmas.size());
    for (std::size_t k = 0; k < sp.texture_sigmas.size(); ++k)
        s.shape.texture[k] = rng.normal(0.0, sp.texture_sigmas[k]);
    s.shape.bump_width = sp.bump_width;
    if (pathological) {
        s.shape.bump_amplitude = rng.uniform(sp.bump_amp_lo, sp.bump_amp_hi);
        Vec3 jitter{rng.normal(), rng.normal(), rng.normal()};
        s.shape.bump_direction = normalized(sp.bump_center_direction + jitter * sp.bump_direction_jitter);
    } else {
        s.shape.bump_amplitude = 0.0;
    }

    s.render.foreground = rng.uniform(sp.fg_lo, sp.fg_hi);
    s.render.background = rng.uniform(sp.bg_lo, sp.bg_hi);
    s.render.edge_softness = sp.edge_softness;
    s.render.noise_sigma = rng.uniform(sp.noise_lo, sp.noise_hi);
    s.render.gain = rng.uniform(sp.gain_lo, sp.gain_hi);
    s.render.bias = rng.uniform(sp.bias_lo, sp.bias_hi);

    Volume geom = sp.geometry();
    s.correspondences = make_shape(s.shape, sp.num_points);
    double half_extent = 0.5 * double(sp.volume_dim) * sp.spacing;
    for (const Vec3& p : s.correspondences.points)
        if (std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)}) >= 0.98 * half_extent)
            throw ValidationError("study sample " + s.id + " reaches the volume boundary");
    s.mesh = extract_isosurface(shape_sdf_volume(s.shape, geom), 0.0);
    s.image = render_volume(s.shape, s.render, geom, rng);
    return s;
}

} // namespace detail

/// Draws a full synthetic study: n_normal shapes without pathology (split
/// into pdm-train / held-out / unseen-normal by position) and
/// n_pathological shapes with the bump (all unseen-pathological). Each
/// sample uses its own rng stream derived from the master seed, so
/// generation is order-independent and parallelizable.
inline Study generate_study(std::size_t n_normal, std::size_t n_pathological, const StudyParams& sp,
                            std::uint64_t seed, int workers = 1) {
    sp.validate();
    if (n_normal < sp.n_held_out + sp.n_unseen_normal + 2)
        throw ValidationError("generate_study: normal count leaves fewer than 2 pdm-train shapes");

    const std::size_t total = n_normal + n_pathological;
    const std::size_t n_pdm = n_normal - sp.n_held_out - sp.n_unseen_normal;
    Study study;
    study.params = sp;
    study.samples.resize(total);
    Rng master(seed);
    parallel_for(total, workers, [&](std::size_t i) {
        bool pathological = i >= n_normal;
        Split split = Split::UnseenPathological;
        if (!pathological)
            split = i < n_pdm                     ? Split::PdmTrain
                    : i < n_pdm + sp.n_held_out ? Split::HeldOut
                                                  : Split::UnseenNormal;
        StudySample s = detail::make_study_sample(sp, i, split, pathological, master.derive(i));
        s.stream = i;
        study.samples[i] = std::move(s);
    });
    return study;
}

// ---------------------------------------------------------------------------
// Corpus directory: shapes/<id>.csv, volumes/<id>.svol, meshes/<id>.obj, and
// a `manifest` text file with one line per sample.
// ---------------------------------------------------------------------------

inline std::string manifest_line(const StudySample& s) {
    std::ostringstream os;
    os << "sample id=" << s.id << " split=" << split_name(s.split) << " axes="
       << fmt_double(s.shape.semi_a) << ',' << fmt_double(s.shape.semi_b) << ','
       << fmt_double(s.shape.semi_c) << " texture=";
    if (s.shape.texture.empty()) {
        os << "none";
    } else {
        for (std::size_t k = 0; k < s.shape.texture.size(); ++k)
            os << (k ? "," : "") << fmt_double(s.shape.texture[k]);
    }
    os << " bump=" << fmt_double(s.shape.bump_amplitude) << ','
       << fmt_double(s.shape.bump_direction.x) << ',' << fmt_double(s.shape.bump_direction.y) << ','
       << fmt_double(s.shape.bump_direction.z) << ',' << fmt_double(s.shape.bump_width)
       << " render=" << fmt_double(s.render.foreground) << ',' << fmt_double(s.render.background)
       << ',' << fmt_double(s.render.edge_softness) << ',' << fmt_double(s.render.noise_sigma) << ','
       << fmt_double(s.render.gain) << ',' << fmt_double(s.render.bias)
       << " stream=" << s.stream;
    return os.str();
}

namespace detail {

inline std::vector<double> parse_csv_numbers(const std::string& text, std::size_t expect,
                                             const std::string& what) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            throw IoError("manifest: bad number in " + what + ": " + tok);
        }
        if (pos != tok.size()) throw IoError("manifest: bad number in " + what + ": " + tok);
        out.push_back(v);
    }
    // expect == size_t(-1) means "any non-empty count"
    if (expect == std::size_t(-1) ? out.empty() : out.size() != expect)
        throw IoError("manifest: expected " + (expect == std::size_t(-1) ? std::string("values") : std::to_string(expect) + " values") + " for " + what);
    return out;
}

} // namespace detail

inline StudySample parse_manifest_line(const std::string& line) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "sample") throw IoError("manifest: line does not start with 'sample'");
    StudySample s;
    bool got_id = false, got_split = false, got_axes = false, got_texture = false, got_bump = false,
         got_render = false, got_stream = false;
    std::string field;
    while (ss >> field) {
        auto eq = field.find('=');
        if (eq == std::string::npos) throw IoError("manifest: field without '=': " + field);
        std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "id") {
            s.id = value;
            got_id = true;
        } else if (key == "split") {
            s.split = split_from_name(value);
            got_split = true;
        } else if (key == "axes") {
            auto v = detail::parse_csv_numbers(value, 3, "axes");
            s.shape.semi_a = v[0];
            s.shape.semi_b = v[1];
            s.shape.semi_c = v[2];
            got_axes = true;
        } else if (key == "texture") {
            if (value != "none") {
                s.shape.texture = detail::parse_csv_numbers(value, std::size_t(-1), "texture");
                if (s.shape.texture.size() > kNumTextureBasis)
                    throw IoError("manifest: too many texture coefficients");
            }
            got_texture = true;
        } else if (key == "bump") {
            auto v = detail::parse_csv_numbers(value, 5, "bump");
            s.shape.bump_amplitude = v[0];
            s.shape.bump_direction = {v[1], v[2], v[3]};
            s.shape.bump_width = v[4];
            got_bump = true;
        } else if (key == "render") {
            auto v = detail::parse_csv_numbers(value, 6, "render");
            s.render.foreground = v[0];
            s.render.background = v[1];
            s.render.edge_softness = v[2];
            s.render.noise_sigma = v[3];
            s.render.gain = v[4];
            s.render.bias = v[5];
            got_render = true;
        } else if (key == "stream") {
            s.stream = std::stoull(value);
            got_stream = true;
        } else {
            throw IoError("manifest: unknown field: " + key);
        }
    }
    if (!(got_id && got_split && got_axes && got_texture && got_bump && got_render && got_stream))
        throw IoError("manifest: missing fields in line: " + line);
    return s;
}

inline void write_study(const Study& study, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "shapes");
    fs::create_directories(fs::path(dir) / "volumes");
    fs::create_directories(fs::path(dir) / "meshes");
    std::ofstream manifest(fs::path(dir) / "manifest");
    if (!manifest) throw IoError("cannot write study manifest in " + dir);
    for (const auto& s : study.samples) {
        write_correspondences(s.correspondences, (fs::path(dir) / "shapes" / (s.id + ".csv")).string());
        write_svol(s.image, (fs::path(dir) / "volumes" / (s.id + ".svol")).string());
        write_obj(s.mesh, (fs::path(dir) / "meshes" / (s.id + ".obj")).string());
        manifest << manifest_line(s) << '\n';
    }
    if (!manifest) throw IoError("study manifest write failed in " + dir);
}

/// Loads a corpus directory written by write_study. Set load_volumes /
/// load_meshes to false to skip the heavy artifacts when a stage only needs
/// shapes and the manifest.
inline Study read_study(const std::string& dir, bool load_volumes = true, bool load_meshes = true) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest");
    if (!manifest) throw IoError("missing study manifest in " + dir);
    Study study;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        StudySample s = parse_manifest_line(line);
        s.correspondences = read_correspondences((fs::path(dir) / "shapes" / (s.id + ".csv")).string());
        if (load_volumes) s.image = read_svol((fs::path(dir) / "volumes" / (s.id + ".svol")).string());
        if (load_meshes) s.mesh = read_obj((fs::path(dir) / "meshes" / (s.id + ".obj")).string());
        study.samples.push_back(std::move(s));
    }
    if (study.samples.empty()) throw IoError("study manifest is empty in " + dir);
    return study;
}

} // namespace shapeforge
