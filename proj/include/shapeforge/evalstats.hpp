#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "shapeforge/align.hpp"
#include "shapeforge/core.hpp"
#include "shapeforge/mesh.hpp"
#include "shapeforge/neuralnet.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/stats.hpp"

namespace shapeforge {

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SummaryStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0, stddev = 0;
};

/// Quantile by inclusive linear interpolation on the sorted values:
/// position h = (n-1)q, interpolated between the straddling order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ValidationError("quantile: empty sample");
    if (!(q >= 0.0) || !(q <= 1.0)) throw ValidationError("quantile: q outside [0, 1]");
    double h = double(sorted.size() - 1) * q;
    std::size_t lo = std::size_t(h);
    double frac = h - double(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline SummaryStats summarize(std::vector<double> values) {
    if (values.empty()) throw ValidationError("summarize: empty sample");
    for (double v : values)
        if (!std::isfinite(v)) throw ValidationError("summarize: non-finite value");
    std::sort(values.begin(), values.end());
    SummaryStats s;
    s.min = values.front();
    s.q1 = quantile_sorted(values, 0.25);
    s.median = quantile_sorted(values, 0.5);
    s.q3 = quantile_sorted(values, 0.75);
    s.max = values.back();
    for (double v : values) s.mean += v;
    s.mean /= double(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / double(values.size() - 1));
    }
    return s;
}

/// Per-shape per-point errors for one split, with per-shape and pooled
/// summaries.
struct ErrorReport {
    std::string split;
    std::vector<std::vector<double>> per_shape;
    std::vector<SummaryStats> shape_summaries;
    SummaryStats pooled;

    void validate() const {
        for (const auto& shape : per_shape)
            for (double e : shape)
                if (!(e >= 0)) throw ValidationError("error report: negative or non-finite error");
        auto ordered = [](const SummaryStats& s) {
            return s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max;
        };
        for (const auto& s : shape_summaries)
            if (!ordered(s)) throw ValidationError("error report: quartiles out of order");
        if (!per_shape.empty() && !ordered(pooled))
            throw ValidationError("error report: pooled quartiles out of order");
    }
};

inline ErrorReport make_error_report(const std::string& split,
                                     std::vector<std::vector<double>> per_shape) {
    if (per_shape.empty()) throw ValidationError("error report: no shapes");
    ErrorReport r;
    r.split = split;
    r.per_shape = std::move(per_shape);
    std::vector<double> pooled;
    for (const auto& shape : r.per_shape) {
        r.shape_summaries.push_back(summarize(shape));
        pooled.insert(pooled.end(), shape.begin(), shape.end());
    }
    r.pooled = summarize(pooled);
    r.validate();
    return r;
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// Per-point Euclidean distance between predicted and true correspondences.
inline std::vector<double> correspondence_error(const CorrespondenceSet& pred,
                                                const CorrespondenceSet& truth) {
    if (pred.points.size() != truth.points.size())
        throw ValidationError("correspondence error: point count mismatch");
    if (pred.points.empty()) throw ValidationError("correspondence error: empty sets");
    std::vector<double> e(pred.points.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = norm(pred.points[i] - truth.points[i]);
    return e;
}

/// Rigidly registers the predicted points to the mesh, then measures each
/// point's distance to its closest surface point.
inline std::vector<double> unseen_projection_error(const CorrespondenceSet& pred, const TriMesh& m,
                                                   int icp_iters = 60, int workers = 1,
                                                   RigidTransform* transform_out = nullptr) {
    if (pred.points.empty()) throw ValidationError("projection error: empty prediction");
    IcpResult icp = icp_to_mesh(pred.points, m, icp_iters, 1e-9, workers);
    if (transform_out) *transform_out = icp.transform;
    std::vector<double> e(pred.points.size());
    parallel_for(pred.points.size(), workers, [&](std::size_t i) {
        Vec3 p = icp.transform.apply(pred.points[i]);
        e[i] = norm(closest_point_on_mesh(m, p) - p);
    });
    return e;
}

// ---------------------------------------------------------------------------
// Mahalanobis histograms
// ---------------------------------------------------------------------------

struct SplitHistogram {
    std::string split;
    std::vector<std::size_t> counts;
    std::vector<double> distances;
    double mean = 0, stddev = 0;
};

struct HistogramTable {
    std::vector<double> edges; // n_bins + 1, shared by every split
    std::vector<SplitHistogram> splits;
};

/// Histograms of Mahalanobis distances per split, on one shared binning that
/// spans every split's range.
inline HistogramTable mahalanobis_histogram(
    const ShapeSpace& ss, const std::vector<std::pair<std::string, std::vector<Loadings>>>& splits,
    std::size_t n_bins = 16) {
    if (splits.empty()) throw ValidationError("mahalanobis histogram: no splits");
    if (n_bins < 1) throw ValidationError("mahalanobis histogram: need at least one bin");
    HistogramTable table;
    double max_d = 0;
    for (const auto& [label, loadings] : splits) {
        if (loadings.empty())
            throw ValidationError("mahalanobis histogram: empty split '" + label + "'");
        SplitHistogram h;
        h.split = label;
        for (const auto& l : loadings) h.distances.push_back(mahalanobis(ss, l));
        for (double d : h.distances) max_d = std::max(max_d, d);
        table.splits.push_back(std::move(h));
    }
    double hi = max_d > 0 ? max_d : 1.0;
    table.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) table.edges[i] = hi * double(i) / double(n_bins);
    for (auto& h : table.splits) {
        h.counts.assign(n_bins, 0);
        for (double d : h.distances) {
            std::size_t bin = std::min(n_bins - 1, std::size_t(d / hi * double(n_bins)));
            ++h.counts[bin];
        }
        SummaryStats s = summarize(h.distances);
        h.mean = s.mean;
        h.stddev = s.stddev;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Vertex error fields
// ---------------------------------------------------------------------------

enum class FieldStat { Mean, Std };

/// Per-correspondence-point statistic across a set of shapes; rendered over
/// the mean shape.
inline std::vector<double> vertex_error_field(const std::vector<std::vector<double>>& per_shape,
                                              FieldStat stat) {
    if (per_shape.empty()) throw ValidationError("vertex field: no shapes");
    const std::size_t P = per_shape[0].size();
    if (P == 0) throw ValidationError("vertex field: no points");
    for (const auto& shape : per_shape)
        if (shape.size() != P) throw ValidationError("vertex field: ragged point counts");

    std::vector<double> field(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        double mean = 0;
        for (const auto& shape : per_shape) mean += shape[p];
        mean /= double(per_shape.size());
        if (stat == FieldStat::Mean) {
            field[p] = mean;
        } else {
            double ss = 0;
            for (const auto& shape : per_shape) ss += (shape[p] - mean) * (shape[p] - mean);
            field[p] = per_shape.size() > 1 ? std::sqrt(ss / double(per_shape.size() - 1)) : 0.0;
        }
    }
    return field;
}

// ---------------------------------------------------------------------------
// Downstream equivalence
// ---------------------------------------------------------------------------

/// Outcome of replaying a downstream regression with both loading sources.
struct DownstreamReport {
    bool exactly_equal = false; // predictions identical; tests short-circuited
    std::vector<double> preds_pdm, preds_net;
    double mean_abs_diff = 0;
    TTestResult ttest;
    TostResult tost;
};

/// Trains the downstream MLP on the reference loadings, then predicts with
/// both loading sources and compares the predictions with a paired t-test
/// and TOST. Identical predictions short-circuit to "exactly equal".
inline DownstreamReport downstream_equivalence(const ShapeSpace& ss,
                                               const std::vector<Loadings>& pdm_loadings,
                                               const std::vector<Loadings>& net_loadings,
                                               const std::vector<double>& targets,
                                               const MlpConfig& cfg = MlpConfig{},
                                               double bound = 0.1, double alpha = 0.05) {
    if (pdm_loadings.size() != net_loadings.size() || pdm_loadings.size() != targets.size())
        throw ValidationError("downstream equivalence: misaligned inputs");
    if (pdm_loadings.size() < 2)
        throw ValidationError("downstream equivalence: needs at least 2 samples");
    const std::size_t M = ss.dim();
    for (const auto& l : pdm_loadings)
        if (l.size() != M) throw ValidationError("downstream equivalence: loadings dim mismatch");
    for (const auto& l : net_loadings)
        if (l.size() != M) throw ValidationError("downstream equivalence: loadings dim mismatch");

    MlpModel model = train_mlp(pdm_loadings, targets, cfg);
    DownstreamReport rep;
    std::vector<double> diffs(pdm_loadings.size());
    for (std::size_t i = 0; i < pdm_loadings.size(); ++i) {
        rep.preds_pdm.push_back(predict_mlp(model, pdm_loadings[i]));
        rep.preds_net.push_back(predict_mlp(model, net_loadings[i]));
        diffs[i] = rep.preds_pdm[i] - rep.preds_net[i];
        rep.mean_abs_diff += std::abs(diffs[i]);
    }
    rep.mean_abs_diff /= double(diffs.size());

    double var = 0, mean = 0;
    for (double d : diffs) mean += d;
    mean /= double(diffs.size());
    for (double d : diffs) var += (d - mean) * (d - mean);
    if (var == 0.0) {
        // zero-variance differences: report exact equality instead of erroring
        rep.exactly_equal = (mean == 0.0);
        rep.ttest = TTestResult{0.0, double(diffs.size() - 1), 1.0};
        rep.tost.p_lower = rep.tost.p_upper = 0.0;
        rep.tost.equivalent = std::abs(mean) < bound;
        return rep;
    }
    rep.ttest = paired_ttest(rep.preds_pdm, rep.preds_net);
    rep.tost = tost_equivalence(diffs, bound, alpha);
    return rep;
}

// ---------------------------------------------------------------------------
// CSV/OBJ export
// ---------------------------------------------------------------------------

inline void write_error_report_csv(const ErrorReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write error report: " + path);
    out << "split,shape,min,q1,median,q3,max,mean,std\n";
    auto row = [&](const std::string& shape, const SummaryStats& s) {
        out << r.split << ',' << shape << ',' << fmt_double(s.min) << ',' << fmt_double(s.q1) << ','
            << fmt_double(s.median) << ',' << fmt_double(s.q3) << ',' << fmt_double(s.max) << ','
            << fmt_double(s.mean) << ',' << fmt_double(s.stddev) << '\n';
    };
    for (std::size_t i = 0; i < r.shape_summaries.size(); ++i)
        row(std::to_string(i), r.shape_summaries[i]);
    row("pooled", r.pooled);
    if (!out) throw IoError("error report write failed: " + path);
}

inline void write_histogram_csv(const HistogramTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write histogram: " + path);
    out << "split,bin_lo,bin_hi,count,split_mean,split_std\n";
    for (const auto& h : t.splits)
        for (std::size_t b = 0; b + 1 < t.edges.size(); ++b)
            out << h.split << ',' << fmt_double(t.edges[b]) << ',' << fmt_double(t.edges[b + 1])
                << ',' << h.counts[b] << ',' << fmt_double(h.mean) << ',' << fmt_double(h.stddev)
                << '\n';
    if (!out) throw IoError("histogram write failed: " + path);
}

inline void write_vertex_field_csv(const std::vector<double>& field, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vertex field: " + path);
    out << "point_index,value\n";
    for (std::size_t i = 0; i < field.size(); ++i)
        out << i << ',' << fmt_double(field[i]) << '\n';
    if (!out) throw IoError("vertex field write failed: " + path);
}

} // namespace shapeforge
