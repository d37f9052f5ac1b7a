#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "shapeforge/core.hpp"

namespace shapeforge {

// ---------------------------------------------------------------------------
// Student t machinery. The CDF is evaluated through the regularized
// incomplete beta function, computed with a modified-Lentz continued
// fraction to 1e-12.
// ---------------------------------------------------------------------------

namespace detail {

inline double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-12) return h;
    }
    throw Error("incomplete beta continued fraction did not converge");
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) throw ValidationError("incomplete beta: a, b must be positive");
    if (!(x >= 0.0) || !(x <= 1.0)) throw ValidationError("incomplete beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                   b * std::log(1.0 - x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cf(a, b, x) / a;
    return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// P(T <= t) for Student's t with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
    if (!(df > 0)) throw ValidationError("t cdf: degrees of freedom must be positive");
    if (!std::isfinite(t)) return t > 0 ? 1.0 : 0.0;
    double x = df / (df + t * t);
    double half_tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
    return t > 0 ? 1.0 - half_tail : half_tail;
}

// ---------------------------------------------------------------------------
// Paired t-test
// ---------------------------------------------------------------------------

struct TTestResult {
    double t = 0;
    double df = 0;
    double p = 1; // two-sided
};

namespace detail {

struct MeanSe {
    double mean, se;
    std::size_t n;
};

inline MeanSe mean_and_se(const std::vector<double>& d, const char* who) {
    if (d.size() < 2) throw ValidationError(std::string(who) + ": needs at least 2 values");
    double mean = 0;
    for (double v : d) {
        if (!std::isfinite(v)) throw ValidationError(std::string(who) + ": non-finite value");
        mean += v;
    }
    mean /= double(d.size());
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);
    double var = ss / double(d.size() - 1);
    if (var == 0.0) throw ValidationError(std::string(who) + ": zero variance");
    return {mean, std::sqrt(var / double(d.size())), d.size()};
}

} // namespace detail

/// Two-sided paired Student t-test on a[i] - b[i].
inline TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("paired t-test: length mismatch");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    detail::MeanSe m = detail::mean_and_se(d, "paired t-test");
    TTestResult r;
    r.t = m.mean / m.se;
    r.df = double(m.n - 1);
    r.p = 2.0 * (1.0 - student_t_cdf(std::abs(r.t), r.df));
    r.p = std::min(1.0, std::max(0.0, r.p));
    return r;
}

// ---------------------------------------------------------------------------
// Two one-sided tests for equivalence (mean of diffs inside ±bound)
// ---------------------------------------------------------------------------

struct TostResult {
    double p_lower = 1; // H0: mean <= -bound
    double p_upper = 1; // H0: mean >= +bound
    bool equivalent = false;
};

inline TostResult tost_equivalence(const std::vector<double>& diffs, double bound = 0.1,
                                   double alpha = 0.05) {
    if (!(bound > 0)) throw ValidationError("tost: bound must be positive");
    if (!(alpha > 0) || !(alpha < 1)) throw ValidationError("tost: alpha outside (0, 1)");
    detail::MeanSe m = detail::mean_and_se(diffs, "tost");
    double df = double(m.n - 1);
    TostResult r;
    // reject "mean <= -bound" when t is large positive
    r.p_lower = 1.0 - student_t_cdf((m.mean + bound) / m.se, df);
    // reject "mean >= +bound" when t is large negative
    r.p_upper = student_t_cdf((m.mean - bound) / m.se, df);
    r.equivalent = std::max(r.p_lower, r.p_upper) < alpha;
    return r;
}

} // namespace shapeforge
