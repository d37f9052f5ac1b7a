#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "shapeforge/volume.hpp"

using namespace shapeforge;

namespace {

Volume linear_ramp_volume(std::array<std::uint32_t, 3> dims) {
    // f(p) = 2x - 3y + z + 5 sampled at voxel centers; trilinear
    // interpolation must reproduce an affine field exactly inside the grid.
    Volume v = make_volume(dims, {0.5, 1.0, 2.0}, {-1.0, 0.25, 3.0});
    for (std::uint32_t k = 0; k < dims[2]; ++k)
        for (std::uint32_t j = 0; j < dims[1]; ++j)
            for (std::uint32_t i = 0; i < dims[0]; ++i) {
                Vec3 p = v.voxel_center(i, j, k);
                v.at(i, j, k) = float(2 * p.x - 3 * p.y + p.z + 5);
            }
    return v;
}

} // namespace

TEST_CASE("trilinear sampling reproduces voxel centers and affine fields") {
    Volume v = linear_ramp_volume({5, 4, 3});
    for (std::uint32_t k = 0; k < 3; ++k)
        for (std::uint32_t j = 0; j < 4; ++j)
            for (std::uint32_t i = 0; i < 5; ++i)
                CHECK(trilinear_sample(v, v.voxel_center(i, j, k)) ==
                      Catch::Approx(double(v.at(i, j, k))).margin(1e-12));

    // interior points, away from the outer half-voxel rim where zero padding
    // would blend in
    for (double fx : {0.3, 1.5, 3.2})
        for (double fy : {0.5, 1.9, 2.5})
            for (double fz : {0.5, 1.1, 1.6}) {
                Vec3 p{v.origin[0] + fx * v.spacing[0], v.origin[1] + fy * v.spacing[1],
                       v.origin[2] + fz * v.spacing[2]};
                double expect = 2 * p.x - 3 * p.y + p.z + 5;
                CHECK(trilinear_sample(v, p) == Catch::Approx(expect).margin(1e-5));
            }
}

TEST_CASE("trilinear sampling blends to zero padding outside the grid") {
    Volume v = make_volume({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 8.0f);
    // half a voxel outside along -x: average of padding 0 and value 8
    CHECK(trilinear_sample(v, {-0.5, 0, 0}) == Catch::Approx(4.0));
    // far away: all padding
    CHECK(trilinear_sample(v, {50, 50, 50}) == Catch::Approx(0.0));
    CHECK_THROWS_AS(trilinear_sample(v, {std::nan(""), 0, 0}), ValidationError);
}

TEST_CASE("downsample averages blocks and reanchors the grid") {
    Volume v = make_volume({4, 4, 2}, {1.0, 1.0, 3.0}, {10.0, 20.0, 30.0});
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(i);

    Volume d = downsample(v, 2);
    REQUIRE(d.dims == std::array<std::uint32_t, 3>{2, 2, 1});
    CHECK(d.spacing == std::array<double, 3>{2.0, 2.0, 6.0});
    // origin moves to the center of the first 2x2x2 block
    CHECK(d.origin == std::array<double, 3>{10.5, 20.5, 31.5});

    // block at (0,0,0) covers linear indices {0,1,4,5, 16,17,20,21}
    double expect0 = (0 + 1 + 4 + 5 + 16 + 17 + 20 + 21) / 8.0;
    CHECK(d.at(0, 0, 0) == Catch::Approx(expect0));
    // block at (1,1,0) covers {10,11,14,15, 26,27,30,31}
    double expect3 = (10 + 11 + 14 + 15 + 26 + 27 + 30 + 31) / 8.0;
    CHECK(d.at(1, 1, 0) == Catch::Approx(expect3));
}

TEST_CASE("downsample drops trailing voxels of a non-multiple extent") {
    Volume v = make_volume({5, 5, 5}, {1, 1, 1}, {0, 0, 0});
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(i % 9);
    Volume d = downsample(v, 2);
    CHECK(d.dims == std::array<std::uint32_t, 3>{2, 2, 2});
    // voxel (1,1,1) of the result must only touch source voxels 2 and 3 per axis
    double sum = 0;
    for (std::uint32_t dk = 2; dk < 4; ++dk)
        for (std::uint32_t dj = 2; dj < 4; ++dj)
            for (std::uint32_t di = 2; di < 4; ++di) sum += v.at(di, dj, dk);
    CHECK(d.at(1, 1, 1) == Catch::Approx(sum / 8.0));
}

TEST_CASE("downsample validates its factor") {
    Volume v = make_volume({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    CHECK_THROWS_AS(downsample(v, 0), ValidationError);
    CHECK_THROWS_AS(downsample(v, 5), ValidationError);
    CHECK(downsample(v, 1).data == v.data);
}

TEST_CASE("normalize_intensity maps the value range onto [0, 255]") {
    Volume v = make_volume({2, 2, 1}, {1, 1, 1}, {0, 0, 0});
    v.data = {-10.0f, 0.0f, 30.0f, -10.0f};
    Volume n = normalize_intensity(v);
    CHECK(n.data[0] == Catch::Approx(0.0));
    CHECK(n.data[2] == Catch::Approx(255.0));
    CHECK(n.data[1] == Catch::Approx(255.0 * 10.0 / 40.0));
    CHECK(n.data[3] == Catch::Approx(0.0));

    Volume c = make_volume({2, 2, 1}, {1, 1, 1}, {0, 0, 0}, 7.0f);
    CHECK_THROWS_AS(normalize_intensity(c), ValidationError);
}

TEST_CASE("volume files survive a round trip and reject garbage") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "sf_volume_test";
    fs::create_directories(dir);
    std::string path = (dir / "vol.svol").string();

    Volume v = linear_ramp_volume({3, 5, 2});
    write_svol(v, path);
    Volume r = read_svol(path);
    CHECK(r.dims == v.dims);
    CHECK(r.spacing == v.spacing);
    CHECK(r.origin == v.origin);
    CHECK(r.data == v.data); // float payload must be bit-identical

    // corrupt the magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("JUNK", 4);
    }
    CHECK_THROWS_AS(read_svol(path), IoError);

    // rewrite, then truncate the payload
    write_svol(v, path);
    fs::resize_file(path, fs::file_size(path) - 7);
    CHECK_THROWS_AS(read_svol(path), IoError);

    CHECK_THROWS_AS(read_svol((dir / "missing.svol").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("volume validation catches inconsistent metadata") {
    Volume v = make_volume({2, 2, 2}, {1, 1, 1}, {0, 0, 0});
    v.data.pop_back();
    CHECK_THROWS_AS(v.validate(), ValidationError);

    Volume w = make_volume({2, 2, 2}, {1, 1, 1}, {0, 0, 0});
    w.data[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(w.validate(), ValidationError);

    Volume s = make_volume({2, 2, 2}, {1, 1, 1}, {0, 0, 0});
    s.spacing[1] = 0.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
}
