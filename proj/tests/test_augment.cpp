#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "shapeforge/augment.hpp"
#include "shapeforge/synthdata.hpp"

using namespace shapeforge;

namespace {

struct Corpus {
    std::vector<CorrespondenceSet> shapes;
    std::vector<Volume> images;
    ShapeSpace space;
};

Corpus tiny_corpus(std::size_t n, std::uint64_t seed) {
    StudyParams sp;
    sp.num_points = 64;
    sp.volume_dim = 16;
    sp.spacing = 4.0;
    sp.n_held_out = 0;
    sp.n_unseen_normal = 0;
    Study study = generate_study(n, 0, sp, seed, 1);
    Corpus c;
    for (auto& s : study.samples) {
        c.shapes.push_back(s.correspondences);
        c.images.push_back(s.image);
    }
    c.space = build_pca(c.shapes, 0.99);
    return c;
}

CorrespondenceSet shifted(const CorrespondenceSet& base, const Vec3& v) {
    CorrespondenceSet out = base;
    for (auto& p : out.points) p = p + v;
    return out;
}

} // namespace

TEST_CASE("sampled loadings have the shape space's variance structure") {
    Corpus c = tiny_corpus(10, 3);
    const std::size_t n = 6000;
    std::vector<double> mean(c.space.dim(), 0), var(c.space.dim(), 0);
    Rng rng(77);
    std::vector<Loadings> draws;
    for (std::size_t i = 0; i < n; ++i) {
        Loadings l = sample_loadings(c.space, rng);
        REQUIRE(l.size() == c.space.dim());
        for (std::size_t k = 0; k < l.size(); ++k) mean[k] += l[k];
        draws.push_back(std::move(l));
    }
    for (auto& m : mean) m /= double(n);
    for (const auto& l : draws)
        for (std::size_t k = 0; k < l.size(); ++k) var[k] += (l[k] - mean[k]) * (l[k] - mean[k]);
    for (std::size_t k = 0; k < c.space.dim(); ++k) {
        double lambda = c.space.eigenvalues[k];
        CHECK(std::abs(mean[k]) < 5.0 * std::sqrt(lambda / double(n)));
        CHECK(var[k] / double(n - 1) == Catch::Approx(lambda).epsilon(0.10));
    }
}

TEST_CASE("nearest example matches an explicit scan and breaks ties low") {
    Corpus c = tiny_corpus(12, 5);
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        Loadings l = sample_loadings(c.space, rng);
        double dist = 0;
        std::size_t got = nearest_example(c.space, c.shapes, l, &dist);
        CorrespondenceSet rec = reconstruct(c.space, l);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < c.shapes.size(); ++i) {
            double s = 0;
            for (std::size_t k = 0; k < rec.points.size(); ++k)
                s += norm2(rec.points[k] - c.shapes[i].points[k]);
            if (std::sqrt(s) < best_d) {
                best_d = std::sqrt(s);
                best = i;
            }
        }
        CHECK(got == best);
        CHECK(dist == Catch::Approx(best_d).margin(1e-9));
    }

    // exact duplicates: the lower index wins
    std::vector<CorrespondenceSet> dup{c.shapes[0], c.shapes[1], c.shapes[1]};
    Loadings l = project(c.space, c.shapes[1]);
    CHECK(nearest_example(c.space, dup, l) == 1);
}

TEST_CASE("the default rejection threshold is 1.5x the mean neighbor distance") {
    CorrespondenceSet base;
    for (std::size_t i = 0; i < 16; ++i) base.points.push_back(fibonacci_direction(i, 16) * 10.0);
    // three shapes on a line: neighbor distances d, d, 2d
    double step = 2.0;
    std::vector<CorrespondenceSet> training{base, shifted(base, {step, 0, 0}),
                                            shifted(base, {3 * step, 0, 0})};
    double d = step * std::sqrt(16.0);
    CHECK(default_reject_threshold(training) ==
          Catch::Approx(1.5 * (d + d + 2 * d) / 3.0).margin(1e-9));
}

TEST_CASE("augmented samples respect the rejection threshold") {
    Corpus c = tiny_corpus(10, 11);
    AugmentConfig cfg;
    cfg.n_samples = 16;
    cfg.reject_threshold = default_reject_threshold(c.shapes);
    cfg.seed = 21;
    auto set = generate_augmented_set(c.space, c.shapes, c.images, cfg);
    REQUIRE(set.size() == 16);
    for (const auto& a : set) {
        CHECK(a.distance <= cfg.reject_threshold);
        CHECK(a.source_index < c.shapes.size());
        CHECK(a.loadings.size() == c.space.dim());
        CHECK(a.image.dims == c.images[0].dims);
        // the nearest example recorded really is the nearest
        double dist = 0;
        CHECK(nearest_example(c.space, c.shapes, a.loadings, &dist) == a.source_index);
        CHECK(dist == Catch::Approx(a.distance).margin(1e-12));
    }
}

TEST_CASE("augmented images still look like images of the shape family") {
    Corpus c = tiny_corpus(8, 13);
    AugmentConfig cfg;
    cfg.n_samples = 6;
    cfg.reject_threshold = default_reject_threshold(c.shapes);
    cfg.seed = 2;
    auto set = generate_augmented_set(c.space, c.shapes, c.images, cfg);
    for (const auto& a : set) {
        float lo = 1e9f, hi = -1e9f;
        for (float v : a.image.data) {
            REQUIRE(std::isfinite(v));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo > -100.0f);
        CHECK(hi < 400.0f);
        // bright interior, dark exterior
        std::uint32_t mid = a.image.dims[0] / 2;
        CHECK(a.image.at(mid, mid, mid) > a.image.at(0, 0, 0) + 30.0f);
    }
}

TEST_CASE("an impossible threshold fails fast with a clear error") {
    Corpus c = tiny_corpus(8, 17);
    AugmentConfig cfg;
    cfg.n_samples = 10;
    cfg.reject_threshold = 1e-9; // nothing can pass; acceptance stalls at 0%
    cfg.seed = 1;
    CHECK_THROWS_WITH(generate_augmented_set(c.space, c.shapes, c.images, cfg),
                      Catch::Matchers::ContainsSubstring("acceptance rate"));
}

TEST_CASE("augmentation is bitwise reproducible and worker independent") {
    Corpus c = tiny_corpus(9, 19);
    AugmentConfig cfg;
    cfg.n_samples = 8;
    cfg.reject_threshold = default_reject_threshold(c.shapes);
    cfg.seed = 33;
    auto a = generate_augmented_set(c.space, c.shapes, c.images, cfg, 1);
    auto b = generate_augmented_set(c.space, c.shapes, c.images, cfg, 1);
    auto p = generate_augmented_set(c.space, c.shapes, c.images, cfg, 3);
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == p.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].source_index == b[i].source_index);
        CHECK(a[i].loadings == b[i].loadings);
        REQUIRE(a[i].image.data == b[i].image.data);
        CHECK(a[i].source_index == p[i].source_index);
        CHECK(a[i].loadings == p[i].loadings);
        REQUIRE(a[i].image.data == p[i].image.data);
    }
}

TEST_CASE("augmentation validates its configuration") {
    Corpus c = tiny_corpus(8, 23);
    AugmentConfig cfg;
    cfg.n_samples = 0;
    cfg.reject_threshold = 1.0;
    CHECK_THROWS_AS(generate_augmented_set(c.space, c.shapes, c.images, cfg), ValidationError);
    cfg.n_samples = 2;
    cfg.reject_threshold = 0.0;
    CHECK_THROWS_AS(generate_augmented_set(c.space, c.shapes, c.images, cfg), ValidationError);
    cfg.reject_threshold = -1.0;
    CHECK_THROWS_AS(generate_augmented_set(c.space, c.shapes, c.images, cfg), ValidationError);
    cfg.reject_threshold = 1.0;
    std::vector<Volume> wrong_count(c.images.begin(), c.images.end() - 1);
    CHECK_THROWS_AS(generate_augmented_set(c.space, c.shapes, wrong_count, cfg), ValidationError);
}
