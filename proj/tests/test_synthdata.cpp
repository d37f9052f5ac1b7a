#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "shapeforge/synthdata.hpp"

using namespace shapeforge;

namespace {

// independent reimplementation of the spiral-on-sphere point set, written
// from the spherical-coordinate form rather than the cartesian one
Vec3 spiral_reference(std::size_t i, std::size_t total) {
    double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
    double cos_theta = 1.0 - (2.0 * double(i) + 1.0) / double(total);
    double theta = std::acos(std::min(1.0, std::max(-1.0, cos_theta)));
    double phi = std::fmod(double(i) * golden_angle, 2.0 * M_PI);
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

ShapeParams default_like_shape() {
    ShapeParams p;
    p.semi_a = 16.5;
    p.semi_b = 14.0;
    p.semi_c = 12.0;
    p.texture = {0.2, -0.15, 0.1, 0.12, -0.08, 0.1, -0.06, 0.05, 0.08, -0.04, 0.05, 0.03};
    return p;
}

} // namespace

TEST_CASE("sphere directions are unit length and match the reference spiral") {
    const std::size_t P = 257;
    for (std::size_t i = 0; i < P; ++i) {
        Vec3 u = fibonacci_direction(i, P);
        CHECK(std::abs(norm(u) - 1.0) < 1e-12);
        // reference uses fmod on the azimuth, so compare directions via dot
        CHECK(dot(u, spiral_reference(i, P)) > 1.0 - 1e-9);
    }
}

TEST_CASE("sphere directions cover the sphere evenly") {
    const std::size_t P = 256;
    // nearest-neighbor angle should be within a small factor of the ideal
    // equal-area spacing ~ sqrt(4/P)
    double ideal = std::sqrt(4.0 / double(P));
    for (std::size_t i = 0; i < P; ++i) {
        double best = 10;
        Vec3 u = fibonacci_direction(i, P);
        for (std::size_t j = 0; j < P; ++j) {
            if (j == i) continue;
            best = std::min(best, std::acos(std::clamp(dot(u, fibonacci_direction(j, P)), -1.0, 1.0)));
        }
        CHECK(best > 0.3 * ideal);
        CHECK(best < 3.0 * ideal);
    }
}

TEST_CASE("texture basis is orthonormal on the sphere") {
    // numerically integrate over a dense equal-area point set; this pins the
    // normalization constants against an independent quadrature
    const std::size_t P = 50000;
    for (std::size_t a = 0; a < kNumTextureBasis; ++a) {
        double mean = 0, second = 0;
        for (std::size_t i = 0; i < P; ++i) {
            double v = texture_basis(a, fibonacci_direction(i, P));
            mean += v;
            second += v * v;
        }
        mean /= double(P);
        second /= double(P);
        CHECK(std::abs(mean) < 0.02);
        CHECK(second == Catch::Approx(1.0).margin(0.02));
    }
    for (std::size_t a = 0; a < kNumTextureBasis; ++a)
        for (std::size_t b = a + 1; b < kNumTextureBasis; ++b) {
            double cross = 0;
            for (std::size_t i = 0; i < P; ++i) {
                Vec3 u = fibonacci_direction(i, P);
                cross += texture_basis(a, u) * texture_basis(b, u);
            }
            CHECK(std::abs(cross / double(P)) < 0.02);
        }
    CHECK_THROWS_AS(texture_basis(kNumTextureBasis, {0, 0, 1}), ValidationError);
}

TEST_CASE("a sphere has constant radius in every direction") {
    ShapeParams p;
    p.semi_a = p.semi_b = p.semi_c = 10.0;
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(shape_radius(p, fibonacci_direction(i, 40)) == Catch::Approx(10.0).margin(1e-12));
}

TEST_CASE("the bump raises the radius locally with a gaussian profile") {
    ShapeParams p;
    p.semi_a = p.semi_b = p.semi_c = 10.0;
    p.bump_amplitude = 3.0;
    p.bump_direction = {0, 0, 1};
    p.bump_width = 0.45;
    CHECK(shape_radius(p, {0, 0, 1}) == Catch::Approx(13.0).margin(1e-12));
    double theta = 0.3;
    Vec3 u{std::sin(theta), 0, std::cos(theta)};
    double expected = 10.0 + 3.0 * std::exp(-theta * theta / (0.45 * 0.45));
    CHECK(shape_radius(p, u) == Catch::Approx(expected).margin(1e-12));
    // far side of the shape is untouched
    CHECK(shape_radius(p, {0, 0, -1}) == Catch::Approx(10.0).margin(1e-6));
}

TEST_CASE("texture coefficients move the radius by the basis value") {
    ShapeParams p;
    p.semi_a = p.semi_b = p.semi_c = 10.0;
    p.texture.assign(kNumTextureBasis, 0.0);
    p.texture[4] = 0.5; // the (x^2 - y^2) harmonic
    Vec3 u{1, 0, 0};
    CHECK(shape_radius(p, u) == Catch::Approx(10.0 + 0.5 * texture_basis(4, u)).margin(1e-12));
}

TEST_CASE("correspondences lie on the surface along fixed directions") {
    ShapeParams p = default_like_shape();
    CorrespondenceSet c = make_shape(p, 128);
    REQUIRE(c.points.size() == 128);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        Vec3 u = fibonacci_direction(i, 128);
        CHECK(norm(c.points[i] - u * shape_radius(p, u)) < 1e-12);
        CHECK(std::abs(shape_signed_distance(p, c.points[i])) < 1e-9);
    }
    CHECK_THROWS_AS(make_shape(p, 3), ValidationError);
}

TEST_CASE("signed distance is negative inside and positive outside") {
    ShapeParams p = default_like_shape();
    CHECK(shape_signed_distance(p, {0, 0, 0}) < 0);
    for (std::size_t i = 0; i < 32; ++i) {
        Vec3 u = fibonacci_direction(i, 32);
        double r = shape_radius(p, u);
        CHECK(shape_signed_distance(p, u * (0.5 * r)) < 0);
        CHECK(shape_signed_distance(p, u * (1.5 * r)) > 0);
    }
}

TEST_CASE("signed distance behaves metrically near the surface") {
    // |grad f| should be close to 1 for the population's typical shapes
    ShapeParams p = default_like_shape();
    std::vector<double> mags;
    const double h = 1e-5;
    for (std::size_t i = 0; i < 200; ++i) {
        Vec3 x = fibonacci_direction(i, 200) * shape_radius(p, fibonacci_direction(i, 200));
        double gx = (shape_signed_distance(p, x + Vec3{h, 0, 0}) - shape_signed_distance(p, x - Vec3{h, 0, 0})) / (2 * h);
        double gy = (shape_signed_distance(p, x + Vec3{0, h, 0}) - shape_signed_distance(p, x - Vec3{0, h, 0})) / (2 * h);
        double gz = (shape_signed_distance(p, x + Vec3{0, 0, h}) - shape_signed_distance(p, x - Vec3{0, 0, h})) / (2 * h);
        mags.push_back(std::sqrt(gx * gx + gy * gy + gz * gz));
    }
    std::sort(mags.begin(), mags.end());
    double median = mags[mags.size() / 2];
    CHECK(median > 0.9);
    CHECK(median < 1.1);
}

TEST_CASE("extracted surface stays within half a voxel of the true surface") {
    ShapeParams p = default_like_shape();
    StudyParams sp;
    Volume sdf = shape_sdf_volume(p, sp.geometry());
    TriMesh m = extract_isosurface(sdf, 0.0);
    REQUIRE(m.vertices.size() > 100);
    double bound = 0.5 * sdf.voxel_diagonal();
    for (const auto& v : m.vertices)
        CHECK(std::abs(shape_signed_distance(p, v)) < bound);
}

TEST_CASE("rendering is a soft shell between background and foreground") {
    ShapeParams p = default_like_shape();
    RenderParams rp;
    rp.foreground = 200;
    rp.background = 30;
    rp.edge_softness = 2.5;
    rp.noise_sigma = 0;
    rp.gain = 1.1;
    rp.bias = -5;
    StudyParams sp;
    Rng rng(1);
    Volume img = render_volume(p, rp, sp.geometry(), rng);
    // center is deep inside, corner far outside
    CHECK(img.at(16, 16, 16) == Catch::Approx(-5 + 1.1 * 200).margin(1e-4));
    CHECK(img.at(0, 0, 0) == Catch::Approx(-5 + 1.1 * 30).margin(1e-4));
    // no rng draws were consumed without noise
    Rng fresh(1);
    CHECK(rng.uniform() == fresh.uniform());
}

TEST_CASE("render noise is drawn per voxel in index order") {
    ShapeParams p = default_like_shape();
    RenderParams noisy;
    noisy.noise_sigma = 3.0;
    RenderParams clean = noisy;
    clean.noise_sigma = 0.0;
    StudyParams sp;
    sp.volume_dim = 16;
    sp.spacing = 4.0;
    Rng r1(7), r2(7), ref(7);
    Volume a = render_volume(p, noisy, sp.geometry(), r1);
    Volume b = render_volume(p, noisy, sp.geometry(), r2);
    for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(a.data[i] == b.data[i]);
    Volume base = render_volume(p, clean, sp.geometry(), r1);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(double(a.data[i]) - double(base.data[i]) == Catch::Approx(ref.normal(0.0, 3.0)).margin(1e-3));
}

TEST_CASE("study generation lays out splits by position") {
    StudyParams sp;
    sp.num_points = 64;
    sp.volume_dim = 16;
    sp.spacing = 4.0;
    sp.n_held_out = 1;
    sp.n_unseen_normal = 1;
    Study study = generate_study(6, 2, sp, 99, 1);
    REQUIRE(study.samples.size() == 8);
    CHECK(study.samples[0].id == "s0000");
    CHECK(study.samples[7].id == "s0007");
    for (std::size_t i = 0; i < 4; ++i) CHECK(study.samples[i].split == Split::PdmTrain);
    CHECK(study.samples[4].split == Split::HeldOut);
    CHECK(study.samples[5].split == Split::UnseenNormal);
    CHECK(study.samples[6].split == Split::UnseenPathological);
    CHECK(study.samples[7].split == Split::UnseenPathological);
    CHECK(study.indices(Split::PdmTrain) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(study.indices(Split::UnseenPathological) == std::vector<std::size_t>{6, 7});

    for (const auto& s : study.samples) {
        CHECK(s.shape.texture.size() == sp.texture_sigmas.size());
        if (s.split == Split::UnseenPathological) {
            CHECK(s.shape.bump_amplitude >= sp.bump_amp_lo);
            CHECK(s.shape.bump_amplitude <= sp.bump_amp_hi);
            CHECK(dot(s.shape.bump_direction, sp.bump_center_direction) > 0.9);
        } else {
            CHECK(s.shape.bump_amplitude == 0.0);
        }
        CHECK(s.image.dims == std::array<std::uint32_t, 3>{16, 16, 16});
        CHECK(s.correspondences.points.size() == 64);
        CHECK(s.mesh.faces.size() > 0);
    }

    CHECK_THROWS_AS(generate_study(3, 0, sp, 1), ValidationError);
}

TEST_CASE("study generation does not depend on worker count") {
    StudyParams sp;
    sp.num_points = 48;
    sp.volume_dim = 12;
    sp.spacing = 5.5;
    sp.n_held_out = 1;
    sp.n_unseen_normal = 1;
    Study a = generate_study(5, 1, sp, 4242, 1);
    Study b = generate_study(5, 1, sp, 4242, 3);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].image.data == b.samples[i].image.data);
        for (std::size_t k = 0; k < a.samples[i].correspondences.points.size(); ++k)
            REQUIRE(norm(a.samples[i].correspondences.points[k] - b.samples[i].correspondences.points[k]) == 0.0);
    }
}

TEST_CASE("study parameter validation rejects shapes that overflow the volume") {
    StudyParams sp;
    sp.axis_hi = 30.0; // 30 + 5.5 + ripple > 0.95 * 32
    CHECK_THROWS_AS(sp.validate(), ValidationError);

    StudyParams neg;
    neg.texture_sigmas[0] = -0.1;
    CHECK_THROWS_AS(neg.validate(), ValidationError);

    StudyParams many;
    many.texture_sigmas.assign(kNumTextureBasis + 1, 0.01);
    CHECK_THROWS_AS(many.validate(), ValidationError);
}

TEST_CASE("manifest lines round-trip every sample field") {
    StudyParams sp;
    sp.num_points = 32;
    sp.volume_dim = 12;
    sp.spacing = 5.5;
    sp.n_held_out = 1;
    sp.n_unseen_normal = 1;
    Study study = generate_study(4, 1, sp, 5, 1);
    for (const auto& s : study.samples) {
        StudySample r = parse_manifest_line(manifest_line(s));
        CHECK(r.id == s.id);
        CHECK(r.split == s.split);
        CHECK(r.shape.semi_a == s.shape.semi_a);
        CHECK(r.shape.semi_b == s.shape.semi_b);
        CHECK(r.shape.semi_c == s.shape.semi_c);
        REQUIRE(r.shape.texture.size() == s.shape.texture.size());
        for (std::size_t k = 0; k < s.shape.texture.size(); ++k)
            CHECK(r.shape.texture[k] == s.shape.texture[k]);
        CHECK(r.shape.bump_amplitude == s.shape.bump_amplitude);
        CHECK(norm(r.shape.bump_direction - s.shape.bump_direction) == 0.0);
        CHECK(r.shape.bump_width == s.shape.bump_width);
        CHECK(r.render.foreground == s.render.foreground);
        CHECK(r.render.background == s.render.background);
        CHECK(r.render.edge_softness == s.render.edge_softness);
        CHECK(r.render.noise_sigma == s.render.noise_sigma);
        CHECK(r.render.gain == s.render.gain);
        CHECK(r.render.bias == s.render.bias);
        CHECK(r.stream == s.stream);
    }

    StudySample bare;
    bare.id = "s0000";
    bare.shape.semi_a = bare.shape.semi_b = bare.shape.semi_c = 10;
    StudySample r = parse_manifest_line(manifest_line(bare));
    CHECK(r.shape.texture.empty());

    CHECK_THROWS_AS(parse_manifest_line("nonsense"), IoError);
    CHECK_THROWS_AS(parse_manifest_line("sample id=x split=pdm-train"), IoError);
    CHECK_THROWS_AS(parse_manifest_line(
                        "sample id=x split=pdm-train axes=1,2 texture=none bump=0,0,0,1,0.45 "
                        "render=1,2,3,4,5,6 stream=0"),
                    IoError);
}

TEST_CASE("a study written to disk reads back identically") {
    namespace fs = std::filesystem;
    StudyParams sp;
    sp.num_points = 32;
    sp.volume_dim = 12;
    sp.spacing = 5.5;
    sp.n_held_out = 1;
    sp.n_unseen_normal = 1;
    Study study = generate_study(4, 1, sp, 31, 1);
    fs::path dir = fs::temp_directory_path() / "sf_study_rt";
    fs::remove_all(dir);
    write_study(study, dir.string());
    Study back = read_study(dir.string());
    REQUIRE(back.samples.size() == study.samples.size());
    for (std::size_t i = 0; i < study.samples.size(); ++i) {
        const auto &a = study.samples[i], &b = back.samples[i];
        CHECK(a.id == b.id);
        CHECK(a.split == b.split);
        REQUIRE(a.correspondences.points.size() == b.correspondences.points.size());
        for (std::size_t k = 0; k < a.correspondences.points.size(); ++k)
            CHECK(norm(a.correspondences.points[k] - b.correspondences.points[k]) == 0.0);
        CHECK(a.image.data == b.image.data);
        CHECK(a.mesh.vertices.size() == b.mesh.vertices.size());
        CHECK(a.mesh.faces == b.mesh.faces);
    }
    Study light = read_study(dir.string(), false, false);
    CHECK(light.samples[0].image.data.empty());
    CHECK(light.samples[0].mesh.vertices.empty());
    fs::remove_all(dir);

    CHECK_THROWS_AS(read_study((dir / "missing").string()), IoError);
}
