#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace deconv {

// ========================= special functions ==============================
//
// The normal CDF and quantile are computed internally (no dependence on the
// platform's libm accuracy), so every report is bit-reproducible:
//   * erf/erfc: the classical non-alternating Maclaurin series
//         erf(x) = (2/sqrt(pi)) e^{-x^2} sum_k (2x^2)^k x / (1*3*...*(2k+1))
//     for |x| <= 2, and the Laplace continued fraction
//         sqrt(pi) e^{x^2} erfc(x) = 1/(x+ (1/2)/(x+ (2/2)/(x+ (3/2)/(x+ ...))))
//     for x > 2 (modified Lentz evaluation).  Both converge to full double
//     precision; absolute error is far below the 1e-9 documented bound.
//   * quantile: bracketed Newton inversion of the internal Phi, seeded by the
//     Hastings rational approximation; converges to ~1e-15.

namespace detail {

inline double erf_series(double x) {
    // non-alternating series, all terms positive: no cancellation
    const double x2 = x * x;
    double term = x;          // 2^0 x / 1!!
    double sum = term;
    for (int k = 1; k < 200; ++k) {
        term *= 2.0 * x2 / static_cast<double>(2 * k + 1);
        sum += term;
        if (!(term > sum * 1e-18)) break;
    }
    return 1.1283791670955126 /* 2/sqrt(pi) */ * std::exp(-x2) * sum;
}

inline double erfc_cfrac(double x) {
    // modified Lentz on  1/(x + (1/2)/(x + (2/2)/(x + ...)))
    const double tiny = 1e-300;
    double f = x, c = x, d = 0.0;
    for (int k = 1; k < 300; ++k) {
        const double a = 0.5 * static_cast<double>(k);
        d = x + a * d;
        if (d == 0.0) d = tiny;
        c = x + a / c;
        if (c == 0.0) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    // f now equals the continued fraction's reciprocal denominator times x;
    // assemble erfc = e^{-x^2}/sqrt(pi) * (1/f) * ... careful: f = x * prod,
    // and the CF value is 1/f.
    return std::exp(-x * x) * 0.5641895835477563 /* 1/sqrt(pi) */ / f;
}

} // namespace detail

/// Internal complementary error function (documented series / continued
/// fraction split at |x| = 2; absolute error < 1e-14).
inline double erfc_internal(double x) {
    const double ax = std::fabs(x);
    double pos = (ax <= 2.0) ? 1.0 - detail::erf_series(ax)
                             : detail::erfc_cfrac(ax);
    return (x >= 0.0) ? pos : 2.0 - pos;
}

inline double erf_internal(double x) { return 1.0 - erfc_internal(x); }

/// Standard normal CDF.
inline double normal_cdf(double z) {
    return 0.5 * erfc_internal(-z * 0.7071067811865476 /* 1/sqrt(2) */);
}

/// Standard normal density.
inline double normal_pdf(double z) {
    return 0.3989422804014327 /* 1/sqrt(2*pi) */ * std::exp(-0.5 * z * z);
}

/// Standard normal quantile by bracketed Newton inversion of `normal_cdf`.
/// Accuracy ~1e-15 over (1e-300, 1-1e-16); e.g. quantile(0.975) =
/// 1.959963984540054.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw InvalidArgument("normal_quantile requires 0 < p < 1");
    if (p == 0.5) return 0.0;

    const bool upper = p > 0.5;
    const double q = upper ? 1.0 - p : p; // q <= 1/2, target lower tail
    // Hastings seed (abs error < 3e-3)
    const double t = std::sqrt(-2.0 * std::log(q));
    double z = -(t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t));

    double lo = -40.0, hi = 0.0; // bracket for the lower-tail quantile
    for (int it = 0; it < 60; ++it) {
        const double err = normal_cdf(z) - q;
        if (err > 0.0) hi = z; else lo = z;
        const double step = err / normal_pdf(z);
        double znew = z - step;
        if (!(znew > lo && znew < hi)) znew = 0.5 * (lo + hi); // bisect fallback
        if (std::fabs(znew - z) <= 1e-15 * std::max(1.0, std::fabs(z))) {
            z = znew;
            break;
        }
        z = znew;
    }
    return upper ? -z : z;
}

// ========================= compensated summation ==========================

/// Neumaier compensated accumulator: the running error of a plain sum is
/// carried separately so aggregation results do not depend on magnitude
/// ordering beyond one rounding.
class KahanSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double sum_compensated(const std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value();
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw InsufficientData("mean of empty vector");
    return sum_compensated(v) / static_cast<double>(v.size());
}

/// Two-pass unbiased sample variance (divisor n-1), compensated both passes.
inline double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) throw InsufficientData("sample_variance needs n >= 2");
    const double m = mean_of(v);
    KahanSum s;
    for (double x : v) {
        const double d = x - m;
        s.add(d * d);
    }
    return s.value() / static_cast<double>(v.size() - 1);
}

/// Population variance (divisor n); used by the study aggregates so that
/// rmse^2 = bias^2 + variance holds as an exact algebraic identity.
inline double population_variance(const std::vector<double>& v) {
    if (v.empty()) throw InsufficientData("population_variance of empty vector");
    const double m = mean_of(v);
    KahanSum s;
    for (double x : v) {
        const double d = x - m;
        s.add(d * d);
    }
    return s.value() / static_cast<double>(v.size());
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0; // 0 when the fit is saturated (2 points)
};

/// Ordinary least squares y = intercept + slope*x with the classical
/// standard error of the slope (residual variance with n-2 dof).
inline LinearFit least_squares_line(const std::vector<double>& x,
                                    const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw InsufficientData("least squares needs >= 2 matching points");
    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw InsufficientData("least squares needs distinct x values");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (x.size() > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            ssr += r * r;
        }
        fit.slope_se = std::sqrt(std::max(0.0, ssr / (n - 2.0)) / sxx);
    }
    return fit;
}

} // namespace deconv
