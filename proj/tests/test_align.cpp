#include <catch2/catch_amalgamated.hpp>

#include "shapeforge/align.hpp"
#include "shapeforge/marching_cubes.hpp"
#include "shapeforge/rng.hpp"
#include "shapeforge/volume.hpp"

using namespace shapeforge;

namespace {

std::vector<Vec3> random_cloud(Rng& rng, std::size_t n, double extent) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts)
        p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
    return pts;
}

std::vector<Vec3> apply_all(const RigidTransform& t, const std::vector<Vec3>& pts) {
    std::vector<Vec3> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = t.apply(pts[i]);
    return out;
}

double fit_residual(const RigidTransform& t, const std::vector<Vec3>& src,
                    const std::vector<Vec3>& dst) {
    double s = 0;
    for (std::size_t i = 0; i < src.size(); ++i) s += norm2(t.apply(src[i]) - dst[i]);
    return std::sqrt(s / double(src.size()));
}

TriMesh ellipsoid_mesh() {
    // anisotropic ellipsoid so rotations are fully determined
    Volume v = make_centered_volume(20, 1.0);
    for (std::uint32_t k = 0; k < 20; ++k)
        for (std::uint32_t j = 0; j < 20; ++j)
            for (std::uint32_t i = 0; i < 20; ++i) {
                Vec3 p = v.voxel_center(i, j, k);
                double q = p.x * p.x / 49.0 + p.y * p.y / 25.0 + p.z * p.z / 16.0;
                v.at(i, j, k) = float(q - 1.0);
            }
    return extract_isosurface(v, 0.0);
}

double rotation_angle(const Mat3& r) {
    double c = ((r(0, 0) + r(1, 1) + r(2, 2)) - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

} // namespace

TEST_CASE("rigid fit is exact on identical and rigidly moved clouds") {
    Rng rng(31);
    auto src = random_cloud(rng, 25, 10.0);

    RigidTransform id = kabsch_fit(src, src);
    CHECK(rotation_angle(id.rotation) < 1e-9);
    CHECK(norm(id.translation) < 1e-9);

    RigidTransform truth{axis_angle_rotation({0.3, -1.0, 0.7}, 1.1), {4.0, -2.5, 0.75}};
    auto dst = apply_all(truth, src);
    RigidTransform got = kabsch_fit(src, dst);
    got.validate();
    for (int i = 0; i < 9; ++i)
        CHECK(got.rotation.m[std::size_t(i)] ==
              Catch::Approx(truth.rotation.m[std::size_t(i)]).margin(1e-9));
    CHECK(norm(got.translation - truth.translation) < 1e-9);
}

TEST_CASE("rigid fit never returns a reflection") {
    Rng rng(77);
    auto src = random_cloud(rng, 12, 5.0);
    auto mirrored = src;
    for (auto& p : mirrored) p.x = -p.x;
    RigidTransform t = kabsch_fit(src, mirrored);
    CHECK(t.rotation.det() == Catch::Approx(1.0).margin(1e-9));
    CHECK(fit_residual(t, src, mirrored) > 0.1); // reflection is not reachable
}

TEST_CASE("rigid fit residual is invariant under a common rigid motion") {
    Rng rng(5150);
    auto src = random_cloud(rng, 18, 8.0);
    auto dst = random_cloud(rng, 18, 8.0);
    double r0 = fit_residual(kabsch_fit(src, dst), src, dst);

    RigidTransform common{axis_angle_rotation({1, 1, 0}, 0.6), {-3, 9, 2}};
    auto src2 = apply_all(common, src);
    auto dst2 = apply_all(common, dst);
    double r1 = fit_residual(kabsch_fit(src2, dst2), src2, dst2);
    CHECK(r1 == Catch::Approx(r0).margin(1e-9));
}

TEST_CASE("rigid fit rejects degenerate input") {
    std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(kabsch_fit(two, two), ValidationError);

    std::vector<Vec3> line, target;
    for (int i = 0; i < 6; ++i) {
        line.push_back({double(i), 2.0 * i, -double(i)});
        target.push_back({double(i) + 1, 2.0 * i, -double(i)});
    }
    CHECK_THROWS_AS(kabsch_fit(line, target), ValidationError);

    std::vector<Vec3> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    std::vector<Vec3> mismatched = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(kabsch_fit(three, mismatched), ValidationError);
}

TEST_CASE("rigid transform text form round trips and is validated") {
    RigidTransform t{axis_angle_rotation({0.2, 0.9, -0.4}, 2.2), {1.5, -7.25, 0.0625}};
    RigidTransform r = rigid_from_string(rigid_to_string(t));
    for (int i = 0; i < 9; ++i)
        CHECK(r.rotation.m[std::size_t(i)] == t.rotation.m[std::size_t(i)]);
    CHECK(norm(r.translation - t.translation) == 0.0);

    CHECK_THROWS_AS(rigid_from_string("1 0 0 0 1 0 0 0 1 0 0"), IoError); // 11 numbers
    // scale-2 matrix is not orthonormal
    CHECK_THROWS_AS(rigid_from_string("2 0 0 0 2 0 0 0 2 0 0 0"), ValidationError);
}

TEST_CASE("icp leaves already-aligned points nearly fixed") {
    TriMesh m = ellipsoid_mesh();
    // every 7th vertex is a point exactly on the mesh
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < m.vertices.size(); i += 7) pts.push_back(m.vertices[i]);
    REQUIRE(pts.size() >= 30);

    IcpResult res = icp_to_mesh(pts, m, 20);
    CHECK(res.final_rms < 1e-6);
    CHECK(rotation_angle(res.transform.rotation) < 1e-6);
    CHECK(norm(res.transform.translation) < 1e-6);
}

TEST_CASE("icp recovers a small known misalignment") {
    TriMesh m = ellipsoid_mesh();
    std::vector<Vec3> on_mesh;
    for (std::size_t i = 0; i < m.vertices.size(); i += 5) on_mesh.push_back(m.vertices[i]);

    // displace by ~6 degrees and a bit of translation; icp must undo it
    RigidTransform moved{axis_angle_rotation({0.1, 1.0, 0.3}, 0.10), {0.8, -0.5, 0.3}};
    std::vector<Vec3> pts = apply_all(moved, on_mesh);

    IcpResult res = icp_to_mesh(pts, m, 60, 1e-10);
    res.transform.validate();
    CHECK(res.final_rms < 0.05);

    // composing with the original displacement should be near-identity
    Mat3 round_trip = res.transform.rotation * moved.rotation;
    CHECK(rotation_angle(round_trip) < 0.5 * 3.14159265358979323846 / 180.0);

    // objective never increases
    for (std::size_t i = 1; i < res.rms_history.size(); ++i)
        CHECK(res.rms_history[i] <= res.rms_history[i - 1] + 1e-12);
}

TEST_CASE("icp with zero iterations reports the initial assignment") {
    TriMesh m = ellipsoid_mesh();
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
    IcpResult res = icp_to_mesh(pts, m, 0);
    CHECK(rotation_angle(res.transform.rotation) == 0.0);
    CHECK(norm(res.transform.translation) == 0.0);
    REQUIRE(res.rms_history.size() == 1);
    CHECK(res.final_rms == res.rms_history[0]);
    // interior points of the ellipsoid are ~1-4 mm from the surface
    CHECK(res.final_rms > 0.5);

    CHECK_THROWS_AS(icp_to_mesh({}, m, 5), ValidationError);
    TriMesh empty;
    CHECK_THROWS_AS(icp_to_mesh(pts, empty, 5), ValidationError);
}

TEST_CASE("icp closest-point search gives the same answer on any worker count") {
    TriMesh m = ellipsoid_mesh();
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < m.vertices.size(); i += 9)
        pts.push_back(m.vertices[i] + Vec3{0.3, -0.2, 0.1});
    IcpResult a = icp_to_mesh(pts, m, 8, 1e-9, 1);
    IcpResult b = icp_to_mesh(pts, m, 8, 1e-9, 4);
    CHECK(a.final_rms == b.final_rms);
    CHECK(a.rms_history == b.rms_history);
    for (int i = 0; i < 9; ++i)
        CHECK(a.transform.rotation.m[std::size_t(i)] == b.transform.rotation.m[std::size_t(i)]);
}
