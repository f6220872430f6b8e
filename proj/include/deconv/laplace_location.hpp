#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "errors.hpp"
#include "model.hpp"

namespace deconv {

// One-parameter Laplace location model X_i = theta + Z_i, Z ~ laplace(s)
// with s known.  The sample median maximizes the likelihood; this header
// carries the median MLE together with its variance bookkeeping and the
// plug-in transform for smooth maps of the location.

struct MedianMleReport {
    double theta_hat = 0.0;
    std::size_t n = 0;
    std::string parity;                         // "odd" or "even"
    std::optional<double> exact_var_odd;        // s^2/(n+2), odd n only
    double asympt_var = 0.0;                    // s^2 (variance of sqrt(n)(theta_hat - theta))
    double s = 0.0;
};

/// Canonical sample median: middle order statistic for odd n, average of the
/// two middle order statistics for even n.
inline double sample_median(const Sample& xs) {
    const std::vector<double>& v = xs.sorted();
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sample_median(const std::vector<double>& xs) {
    return sample_median(Sample(xs));
}

/// Median MLE report for known scale s.  The finite-sample variance formula
/// s^2/(n+2) applies to odd sample sizes only; even n leaves the field empty.
/// Asymptotics: sqrt(n)(theta_hat - theta) -> N(0, s^2).
inline MedianMleReport median_mle(const Sample& xs, double scale_s) {
    if (!(scale_s > 0.0) || !std::isfinite(scale_s))
        throw InvalidArgument("median_mle needs scale s > 0");
    MedianMleReport rep;
    rep.theta_hat = sample_median(xs);
    rep.n = xs.n();
    rep.s = scale_s;
    rep.asympt_var = scale_s * scale_s;
    if (xs.n() % 2 == 1) {
        rep.parity = "odd";
        rep.exact_var_odd = scale_s * scale_s / static_cast<double>(xs.n() + 2);
    } else {
        rep.parity = "even";
    }
    return rep;
}

/// Asymptotic relative efficiency diagnostic: ratio of the (Monte Carlo)
/// variance of the sample mean to that of the sample median.  Under Laplace
/// errors the theoretical value is 2.
inline double are_median_vs_mean(double mc_median_var, double mc_mean_var) {
    if (!(mc_median_var > 0.0) || !(mc_mean_var > 0.0))
        throw NonpositiveVariance("ARE needs strictly positive variances");
    return mc_mean_var / mc_median_var;
}

/// Plug-in transform: estimate g(theta_hat) with asymptotic variance
/// [s g'(theta_hat)]^2 for sqrt(n)(g(theta_hat) - g(theta)).  The derivative
/// is evaluated at the estimate (theta itself is unknown at use time).
inline std::pair<double, double> plug_in_location(
    const std::function<double(double)>& g,
    const std::function<double(double)>& g_dot, const MedianMleReport& rep) {
    const double deriv = g_dot(rep.theta_hat);
    if (!std::isfinite(deriv))
        throw InvalidArgument("g' not finite at theta_hat");
    const double sd = rep.s * deriv;
    return {g(rep.theta_hat), sd * sd};
}

} // namespace deconv
