#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "shapeforge/evalstats.hpp"
#include "shapeforge/marching_cubes.hpp"
#include "shapeforge/rng.hpp"

using namespace shapeforge;
using Catch::Matchers::ContainsSubstring;

namespace {

/// Independent t CDF: Simpson integration of the density, normalized through
/// lgamma. No shared code with the continued-fraction path under test.
double t_pdf(double x, double df) {
    double c = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
    return std::exp(c - (df + 1) / 2 * std::log1p(x * x / df));
}

double t_cdf_oracle(double t, double df) {
    double hi = std::abs(t);
    const int n = 40000;
    double h = hi / n, s = t_pdf(0, df) + t_pdf(hi, df);
    for (int i = 1; i < n; ++i) s += t_pdf(i * h, df) * (i % 2 ? 4 : 2);
    double integral = s * h / 3;
    return t > 0 ? 0.5 + integral : 0.5 - integral;
}

CorrespondenceSet from_points(std::vector<Vec3> pts) {
    CorrespondenceSet cs;
    cs.points = std::move(pts);
    return cs;
}

/// Ellipsoid mesh via the isosurface of its normalized level function.
/// Distinct semi-axes leave no rotational symmetry, so rigid registration
/// against it has a unique optimum.
TriMesh ellipsoid_mesh(double a, double b, double c) {
    double spacing = 2.4 * std::max({a, b, c}) / 48.0;
    Volume v = make_centered_volume(48, spacing);
    for (std::uint32_t k = 0; k < 48; ++k)
        for (std::uint32_t j = 0; j < 48; ++j)
            for (std::uint32_t i = 0; i < 48; ++i) {
                Vec3 p = v.voxel_center(i, j, k);
                double q = (p.x / a) * (p.x / a) + (p.y / b) * (p.y / b) + (p.z / c) * (p.z / c);
                v.data[v.index(i, j, k)] = float(std::sqrt(q) - 1.0);
            }
    return extract_isosurface(v, 0.0);
}

RigidTransform small_rigid() {
    double a = 0.15; // ~8.6 degrees about z
    RigidTransform t;
    t.rotation.m = {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1};
    t.translation = {1.5, -0.8, 0.6};
    return t;
}

std::vector<CorrespondenceSet> random_shapes(std::size_t n, std::size_t P, Rng& rng) {
    // base pattern plus per-shape low-rank wiggle, enough for a usable PCA
    std::vector<Vec3> base(P);
    for (auto& p : base) p = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    std::vector<CorrespondenceSet> shapes(n);
    for (auto& s : shapes) {
        double c1 = rng.normal(0.0, 2.0), c2 = rng.normal(0.0, 1.0);
        s.points.resize(P);
        for (std::size_t i = 0; i < P; ++i)
            s.points[i] = base[i] + Vec3{c1 * std::sin(double(i)), c2 * std::cos(double(i)),
                                         c1 * 0.25 + rng.normal(0.0, 0.05)};
    }
    return shapes;
}

} // namespace

TEST_CASE("t distribution matches the integration oracle and tables") {
    for (double df : {1.0, 4.0, 9.0, 10.0, 30.0, 120.0})
        for (double t : {0.0, 0.5, 1.0, 2.0, 2.449489742783178, 5.0, 12.706}) {
            CHECK(student_t_cdf(t, df) == Catch::Approx(t_cdf_oracle(t, df)).margin(1e-9));
            // symmetry
            CHECK(student_t_cdf(-t, df) == Catch::Approx(1.0 - student_t_cdf(t, df)).margin(1e-12));
        }

    // tabulated quantiles
    CHECK(student_t_cdf(2.2621571628, 9) == Catch::Approx(0.975).margin(1e-8));
    CHECK(student_t_cdf(12.7062047362, 1) == Catch::Approx(0.975).margin(1e-8));
    CHECK(student_t_cdf(1.8124611228, 10) == Catch::Approx(0.95).margin(1e-8));
    CHECK(student_t_cdf(0.0, 7) == 0.5);

    CHECK_THROWS_AS(student_t_cdf(1.0, 0.0), ValidationError);
    CHECK_THROWS_AS(incomplete_beta(0.5, 0.5, 1.5), ValidationError);
    CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1,1) is the identity
    CHECK(incomplete_beta(1.0, 1.0, 0.37) == Catch::Approx(0.37).margin(1e-12));
}

TEST_CASE("paired t-test matches hand computation") {
    // mirrored pairs: differences {-1, 1, -1, 1} have mean zero
    std::vector<double> a{1, 2, 3, 4}, b{2, 1, 4, 3};
    TTestResult r0 = paired_ttest(a, b);
    CHECK(r0.t == Catch::Approx(0.0).margin(1e-15));
    CHECK(r0.p == Catch::Approx(1.0).margin(1e-12));
    CHECK(r0.df == 3.0);

    // worked sample: d = {2,-1,3,4,0,2,1,3,-2,4}, mean 1.6, SS 38.4,
    // sd^2 = 38.4/9, se = sqrt(sd^2/10), t = 1.6/se = sqrt(6)
    std::vector<double> x{2, -1, 3, 4, 0, 2, 1, 3, -2, 4};
    std::vector<double> zero(10, 0.0);
    TTestResult r = paired_ttest(x, zero);
    CHECK(r.t == Catch::Approx(std::sqrt(6.0)).margin(1e-12));
    CHECK(r.df == 9.0);
    CHECK(r.p == Catch::Approx(0.0367875).margin(1e-3));
    CHECK(r.p == Catch::Approx(2 * (1 - t_cdf_oracle(std::sqrt(6.0), 9))).margin(1e-9));

    // swapping the arguments negates t and keeps p
    TTestResult rs = paired_ttest(zero, x);
    CHECK(rs.t == Catch::Approx(-r.t).margin(1e-12));
    CHECK(rs.p == Catch::Approx(r.p).margin(1e-12));
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);

    // degenerate inputs
    CHECK_THROWS_AS(paired_ttest({1, 2}, {1}), ValidationError);
    CHECK_THROWS_AS(paired_ttest({1}, {2}), ValidationError);
    CHECK_THROWS_WITH(paired_ttest({1, 2, 3}, {0, 1, 2}), ContainsSubstring("zero variance"));
}

TEST_CASE("tost declares equivalence exactly when the mean sits inside the bounds") {
    // small symmetric noise: clearly inside +/-0.1
    std::vector<double> tiny{0.001, -0.001, 0.0005, -0.0005, 0.0008, -0.0008, 0.0002, -0.0002};
    TostResult eq = tost_equivalence(tiny, 0.1, 0.05);
    CHECK(eq.equivalent);
    CHECK(eq.p_lower < 1e-6);
    CHECK(eq.p_upper < 1e-6);

    // mean 0.2 with small spread: outside the +0.1 bound
    std::vector<double> shifted{0.19, 0.20, 0.21, 0.20, 0.19, 0.21};
    TostResult neq = tost_equivalence(shifted, 0.1, 0.05);
    CHECK_FALSE(neq.equivalent);
    CHECK(neq.p_upper > 0.95);

    // hand-verified one-sided p: diffs {0.01..0.04}, mean 0.025,
    // se = 0.0129099.../2, t_upper = (0.025-0.1)/se, p = F(t_upper, 3)
    std::vector<double> hand{0.01, 0.02, 0.03, 0.04};
    TostResult h = tost_equivalence(hand, 0.1, 0.05);
    CHECK(h.p_upper == Catch::Approx(0.000684665618).margin(1e-9));
    CHECK(h.equivalent);

    // limit behavior
    CHECK(tost_equivalence(tiny, 1e9, 0.05).equivalent);
    CHECK_FALSE(tost_equivalence(tiny, 1e-9, 0.05).equivalent);
    for (const TostResult& r : {eq, neq, h}) {
        CHECK(r.p_lower >= 0.0);
        CHECK(r.p_lower <= 1.0);
        CHECK(r.p_upper >= 0.0);
        CHECK(r.p_upper <= 1.0);
    }

    CHECK_THROWS_AS(tost_equivalence(tiny, 0.0, 0.05), ValidationError);
    CHECK_THROWS_AS(tost_equivalence({0.5, 0.5, 0.5}, 0.2, 0.05), ValidationError);
    CHECK_THROWS_AS(tost_equivalence({0.1}, 0.2, 0.05), ValidationError);
}

TEST_CASE("correspondence error is plain pointwise distance") {
    Rng rng(4);
    CorrespondenceSet truth;
    for (int i = 0; i < 20; ++i)
        truth.points.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});

    auto zeros = correspondence_error(truth, truth);
    for (double e : zeros) REQUIRE(e == 0.0);

    CorrespondenceSet shifted = truth;
    for (auto& p : shifted.points) p = p + Vec3{3, 4, 0};
    for (double e : correspondence_error(shifted, truth)) REQUIRE(e == Catch::Approx(5.0).margin(1e-12));

    CorrespondenceSet pred = truth;
    for (auto& p : pred.points)
        p = p + Vec3{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
    auto errs = correspondence_error(pred, truth);
    for (std::size_t i = 0; i < errs.size(); ++i) {
        double dx = pred.points[i].x - truth.points[i].x;
        double dy = pred.points[i].y - truth.points[i].y;
        double dz = pred.points[i].z - truth.points[i].z;
        REQUIRE(errs[i] == Catch::Approx(std::sqrt(dx * dx + dy * dy + dz * dz)).margin(1e-12));
    }

    CorrespondenceSet shorted = truth;
    shorted.points.pop_back();
    CHECK_THROWS_AS(correspondence_error(shorted, truth), ValidationError);
}

TEST_CASE("projection error registers onto the surface first") {
    TriMesh m = ellipsoid_mesh(10.0, 7.0, 5.0);
    REQUIRE(m.vertices.size() > 100);

    // predictions sampled exactly on the mesh
    CorrespondenceSet on_mesh;
    for (std::size_t i = 0; i < m.vertices.size(); i += 7) on_mesh.points.push_back(m.vertices[i]);
    auto e0 = unseen_projection_error(on_mesh, m);
    for (double e : e0) REQUIRE(e < 1e-6);

    // same points rigidly displaced: ICP must recover the registration
    RigidTransform t = small_rigid();
    CorrespondenceSet moved = on_mesh;
    for (auto& p : moved.points) p = t.apply(p);
    auto e1 = unseen_projection_error(moved, m, 400);
    for (double e : e1) REQUIRE(e < 1e-3);

    // invariance: transform mesh and points together
    TriMesh m2 = m;
    for (auto& v : m2.vertices) v = t.apply(v);
    auto e2 = unseen_projection_error(moved, m2);
    REQUIRE(e2.size() == e0.size());
    for (std::size_t i = 0; i < e0.size(); ++i) REQUIRE(std::abs(e2[i] - e0[i]) < 1e-3);

    // per-shape mean equals the mean of per-point values
    double mean = 0;
    for (double e : e1) mean += e;
    mean /= double(e1.size());
    REQUIRE(make_error_report("x", {e1}).shape_summaries[0].mean ==
            Catch::Approx(mean).margin(1e-12));

    CHECK_THROWS_AS(unseen_projection_error(from_points({}), m), ValidationError);
}

TEST_CASE("summaries use inclusive linear interpolation") {
    SummaryStats s = summarize({4, 1, 3, 2});
    CHECK(s.min == 1.0);
    CHECK(s.q1 == Catch::Approx(1.75).margin(1e-12));
    CHECK(s.median == Catch::Approx(2.5).margin(1e-12));
    CHECK(s.q3 == Catch::Approx(3.25).margin(1e-12));
    CHECK(s.max == 4.0);
    CHECK(s.mean == Catch::Approx(2.5).margin(1e-12));
    CHECK(s.stddev == Catch::Approx(std::sqrt(5.0 / 3.0)).margin(1e-12));

    SummaryStats one = summarize({7.0});
    CHECK(one.min == 7.0);
    CHECK(one.q1 == 7.0);
    CHECK(one.median == 7.0);
    CHECK(one.max == 7.0);
    CHECK(one.stddev == 0.0);

    Rng rng(10);
    std::vector<double> vals;
    for (int i = 0; i < 101; ++i) vals.push_back(std::abs(rng.normal(2.0, 1.0)));
    SummaryStats r = summarize(vals);
    CHECK(r.min <= r.q1);
    CHECK(r.q1 <= r.median);
    CHECK(r.median <= r.q3);
    CHECK(r.q3 <= r.max);
    CHECK(r.mean <= r.max);
    CHECK(r.mean >= r.min);

    CHECK_THROWS_AS(summarize({}), ValidationError);
}

TEST_CASE("error reports pool shapes and reject bad values") {
    ErrorReport r = make_error_report("val", {{1, 2, 3}, {4, 5, 6}});
    REQUIRE(r.shape_summaries.size() == 2);
    CHECK(r.shape_summaries[0].mean == Catch::Approx(2.0));
    CHECK(r.shape_summaries[1].mean == Catch::Approx(5.0));
    CHECK(r.pooled.mean == Catch::Approx(3.5));
    CHECK(r.pooled.min == 1.0);
    CHECK(r.pooled.max == 6.0);
    for (const auto& s : r.shape_summaries) CHECK(s.mean <= s.max);

    CHECK_THROWS_AS(make_error_report("val", {}), ValidationError);
    CHECK_THROWS_AS(make_error_report("val", {{1.0, -0.5}}), ValidationError);
}

TEST_CASE("mahalanobis histograms share one binning") {
    Rng rng(6);
    auto shapes = random_shapes(8, 12, rng);
    ShapeSpace ss = build_pca(shapes, 0.95);
    REQUIRE(ss.dim() >= 2);

    // the mean shape scores zero and lands in the first bin
    Loadings at_mean(ss.dim(), 0.0);
    std::vector<Loadings> small, large;
    for (int i = 0; i < 10; ++i) {
        Loadings l(ss.dim());
        for (std::size_t k = 0; k < l.size(); ++k)
            l[k] = rng.normal(0.0, 0.3) * std::sqrt(ss.eigenvalues[k]);
        small.push_back(l);
        for (auto& v : l) v *= 6.0;
        large.push_back(l);
    }

    HistogramTable t = mahalanobis_histogram(
        ss, {{"mean_only", {at_mean}}, {"small", small}, {"large", large}}, 12);
    REQUIRE(t.edges.size() == 13);
    REQUIRE(t.splits.size() == 3);
    CHECK(t.splits[0].counts[0] == 1);
    CHECK(t.splits[0].mean == 0.0);
    for (const auto& h : t.splits) {
        std::size_t total = 0;
        for (auto c : h.counts) total += c;
        CHECK(total == h.distances.size());
    }
    CHECK(t.splits[2].mean > t.splits[1].mean);
    // shared range covers every split's maximum
    double global_max = 0;
    for (const auto& h : t.splits)
        for (double d : h.distances) global_max = std::max(global_max, d);
    CHECK(t.edges.back() == Catch::Approx(global_max));

    CHECK_THROWS_AS(mahalanobis_histogram(ss, {}), ValidationError);
    CHECK_THROWS_AS(mahalanobis_histogram(ss, {{"empty", {}}}), ValidationError);
}

TEST_CASE("vertex fields aggregate per point") {
    std::vector<std::vector<double>> one{{1, 2, 3, 4}};
    CHECK(vertex_error_field(one, FieldStat::Mean) == one[0]);
    CHECK(vertex_error_field(one, FieldStat::Std) == std::vector<double>{0, 0, 0, 0});

    std::vector<std::vector<double>> twin{{1, 2, 3}, {1, 2, 3}};
    CHECK(vertex_error_field(twin, FieldStat::Std) == std::vector<double>{0, 0, 0});
    CHECK(vertex_error_field(twin, FieldStat::Mean) == std::vector<double>{1, 2, 3});

    std::vector<std::vector<double>> pair{{1, 5}, {3, 9}};
    auto mean = vertex_error_field(pair, FieldStat::Mean);
    CHECK(mean[0] == Catch::Approx(2.0));
    CHECK(mean[1] == Catch::Approx(7.0));
    auto sd = vertex_error_field(pair, FieldStat::Std);
    CHECK(sd[0] == Catch::Approx(std::sqrt(2.0)).margin(1e-12));
    CHECK(sd[1] == Catch::Approx(std::sqrt(8.0)).margin(1e-12));

    CHECK_THROWS_AS(vertex_error_field({}, FieldStat::Mean), ValidationError);
    CHECK_THROWS_AS(vertex_error_field({{1, 2}, {1}}, FieldStat::Mean), ValidationError);
}

TEST_CASE("downstream equivalence compares both loading sources") {
    Rng rng(12);
    auto shapes = random_shapes(8, 12, rng);
    ShapeSpace ss = build_pca(shapes, 0.95);
    const std::size_t M = ss.dim();

    std::vector<Loadings> pdm;
    std::vector<double> targets;
    for (int i = 0; i < 24; ++i) {
        Loadings l(M);
        for (auto& v : l) v = rng.normal(0.0, 1.0);
        pdm.push_back(l);
        targets.push_back(l[0] > 0 ? 1.0 : 0.0);
    }

    MlpConfig cfg;
    cfg.seed = 3;
    cfg.epochs = 120;

    // identical loadings short-circuit
    DownstreamReport same = downstream_equivalence(ss, pdm, pdm, targets, cfg);
    CHECK(same.exactly_equal);
    CHECK(same.tost.equivalent);
    CHECK(same.ttest.p == 1.0);
    CHECK(same.mean_abs_diff == 0.0);

    // tiny perturbations stay equivalent at the stock bound
    std::vector<Loadings> net = pdm;
    for (auto& l : net)
        for (auto& v : l) v += rng.normal(0.0, 1e-4);
    DownstreamReport close = downstream_equivalence(ss, pdm, net, targets, cfg);
    CHECK_FALSE(close.exactly_equal);
    CHECK(close.tost.equivalent);
    CHECK(close.mean_abs_diff < 1e-2);
    CHECK(close.preds_pdm.size() == pdm.size());

    CHECK_THROWS_AS(downstream_equivalence(ss, pdm, net, {1.0}, cfg), ValidationError);
    std::vector<Loadings> ragged = net;
    ragged[0].pop_back();
    CHECK_THROWS_AS(downstream_equivalence(ss, pdm, ragged, targets, cfg), ValidationError);
}

TEST_CASE("evaluation tables land on disk as csv") {
    ErrorReport r = make_error_report("test", {{1, 2, 3, 4}});
    write_error_report_csv(r, "/tmp/shapeforge_errors.csv");
    {
        std::ifstream in("/tmp/shapeforge_errors.csv");
        std::string line;
        std::getline(in, line);
        REQUIRE(line == "split,shape,min,q1,median,q3,max,mean,std");
        std::getline(in, line);
        REQUIRE(line ==
                "test,0,1,1.75,2.5,3.25,4,2.5," + fmt_double(std::sqrt(5.0 / 3.0)));
        std::getline(in, line);
        REQUIRE(line.substr(0, 12) == "test,pooled,");
    }

    Rng rng(6);
    auto shapes = random_shapes(8, 12, rng);
    ShapeSpace ss = build_pca(shapes, 0.95);
    Loadings zero(ss.dim(), 0.0);
    HistogramTable t = mahalanobis_histogram(ss, {{"a", {zero, zero}}}, 4);
    write_histogram_csv(t, "/tmp/shapeforge_hist.csv");
    {
        std::ifstream in("/tmp/shapeforge_hist.csv");
        std::string line;
        std::getline(in, line);
        REQUIRE(line == "split,bin_lo,bin_hi,count,split_mean,split_std");
        std::getline(in, line);
        REQUIRE(line == "a,0,0.25,2,0,0");
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        REQUIRE(rows == 3);
    }

    write_vertex_field_csv({0.5, 1.25}, "/tmp/shapeforge_field.csv");
    {
        std::ifstream in("/tmp/shapeforge_field.csv");
        std::string line;
        std::getline(in, line);
        REQUIRE(line == "point_index,value");
        std::getline(in, line);
        REQUIRE(line == "0,0.5");
        std::getline(in, line);
        REQUIRE(line == "1,1.25");
    }

    CHECK_THROWS_AS(write_error_report_csv(r, "/nonexistent/dir/errors.csv"), IoError);
}
