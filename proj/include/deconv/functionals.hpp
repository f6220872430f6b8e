#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "stats.hpp"

namespace deconv {

namespace detail {

/// Integer power by repeated multiplication (bit-reproducible, unlike pow).
inline double ipow(double x, unsigned r) {
    double acc = 1.0;
    while (r > 0) {
        if (r & 1u) acc *= x;
        x *= x;
        r >>= 1u;
    }
    return acc;
}

inline std::string format_param(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

// ========================== functional specs ==============================
//
// An integral linear functional psi(F) = \int a dF is described by the pair
// (a, adot) with adot = a'.  For the standard-exponential noise kernel the
// transformed map a - adot is the backbone of the direct estimator and of
// the influence function b(x) = a(x) - adot(x) - psi; all influence-based
// routines below use that convention (rate-1 exponential noise).
//
// Built-in families:
//   mean            a(y)=y,    adot=1
//   moment(r)       a(y)=y^r,  adot=r y^{r-1}
//   mgf(t), 0<|t|<1 a(y)=e^{ty}, adot=t e^{ty}
//   cdf_at(y1)      a(y)=1{y<=y1}            (not differentiable)
//   interval_prob   a(y)=1{y1<y<=y2}         (not differentiable)
//   custom          (y, a, adot) tabulated, linear interpolation, no
//                   extrapolation; adot cross-checked against centered
//                   finite differences of a at construction.

enum class FunctionalFamily { mean, moment, mgf, cdf_at, interval_prob, custom };

class FunctionalSpec {
public:
    static FunctionalSpec mean() { return FunctionalSpec(FunctionalFamily::mean); }

    static FunctionalSpec moment(unsigned r) {
        if (r < 1) throw InvalidFunctional("moment order must be >= 1");
        FunctionalSpec s(FunctionalFamily::moment);
        s.order_ = r;
        return s;
    }

    static FunctionalSpec mgf(double t) {
        if (!(std::fabs(t) > 0.0) || !(std::fabs(t) < 1.0) || !std::isfinite(t))
            throw InvalidFunctional("mgf requires 0 < |t| < 1");
        FunctionalSpec s(FunctionalFamily::mgf);
        s.t_ = t;
        return s;
    }

    static FunctionalSpec cdf_at(double y1) {
        if (!std::isfinite(y1)) throw InvalidFunctional("cdf_at needs finite y1");
        FunctionalSpec s(FunctionalFamily::cdf_at);
        s.y1_ = y1;
        return s;
    }

    static FunctionalSpec interval_prob(double y1, double y2) {
        if (!(y1 < y2) || !std::isfinite(y1) || !std::isfinite(y2))
            throw InvalidFunctional("interval_prob needs y1 < y2, both finite");
        FunctionalSpec s(FunctionalFamily::interval_prob);
        s.y1_ = y1;
        s.y2_ = y2;
        return s;
    }

    static FunctionalSpec custom(std::vector<double> y, std::vector<double> a,
                                 std::vector<double> adot) {
        if (y.size() < 2 || y.size() != a.size() || y.size() != adot.size())
            throw InvalidFunctional("custom functional needs >= 2 nodes, equal lengths");
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (!std::isfinite(y[i]) || !std::isfinite(a[i]) || !std::isfinite(adot[i]))
                throw InvalidFunctional("custom functional values must be finite");
            if (i > 0 && !(y[i] > y[i - 1]))
                throw InvalidFunctional("custom grid must be strictly increasing");
        }
        // adot must agree with centered finite differences of a (relative 1e-4).
        for (std::size_t i = 1; i + 1 < y.size(); ++i) {
            const double fd = (a[i + 1] - a[i - 1]) / (y[i + 1] - y[i - 1]);
            const double tol = 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(adot[i])});
            if (std::fabs(fd - adot[i]) > tol)
                throw InvalidFunctional("custom adot inconsistent with finite differences of a");
        }
        FunctionalSpec s(FunctionalFamily::custom);
        s.grid_ = std::move(y);
        s.a_tab_ = std::move(a);
        s.adot_tab_ = std::move(adot);
        return s;
    }

    FunctionalFamily family() const noexcept { return family_; }
    unsigned moment_order() const noexcept { return order_; }
    double mgf_t() const noexcept { return t_; }

    /// False exactly for the indicator families (cdf_at, interval_prob):
    /// their a is discontinuous, the normal-limit theory does not apply.
    bool regular() const noexcept {
        return family_ != FunctionalFamily::cdf_at &&
               family_ != FunctionalFamily::interval_prob;
    }

    double a(double y) const {
        switch (family_) {
            case FunctionalFamily::mean: return y;
            case FunctionalFamily::moment: return detail::ipow(y, order_);
            case FunctionalFamily::mgf: return std::exp(t_ * y);
            case FunctionalFamily::cdf_at: return y <= y1_ ? 1.0 : 0.0;
            case FunctionalFamily::interval_prob: return (y > y1_ && y <= y2_) ? 1.0 : 0.0;
            case FunctionalFamily::custom: return interp(a_tab_, y);
        }
        throw InvalidFunctional("unknown family");
    }

    double a_dot(double y) const {
        switch (family_) {
            case FunctionalFamily::mean: return 1.0;
            case FunctionalFamily::moment:
                return static_cast<double>(order_) * detail::ipow(y, order_ - 1);
            case FunctionalFamily::mgf: return t_ * std::exp(t_ * y);
            case FunctionalFamily::cdf_at:
            case FunctionalFamily::interval_prob:
                throw NotDifferentiable("indicator functional has no derivative: " + name());
            case FunctionalFamily::custom: return interp(adot_tab_, y);
        }
        throw InvalidFunctional("unknown family");
    }

    /// The transformed map (a - adot)(x) driving the direct estimator.
    double a_minus_adot(double x) const { return a(x) - a_dot(x); }

    std::string name() const {
        switch (family_) {
            case FunctionalFamily::mean: return "mean";
            case FunctionalFamily::moment:
                return "moment:" + std::to_string(order_);
            case FunctionalFamily::mgf: return "mgf:" + detail::format_param(t_);
            case FunctionalFamily::cdf_at: return "cdf:" + detail::format_param(y1_);
            case FunctionalFamily::interval_prob:
                return "interval:" + detail::format_param(y1_) + "," +
                       detail::format_param(y2_);
            case FunctionalFamily::custom: return "custom";
        }
        return "unknown";
    }

private:
    explicit FunctionalSpec(FunctionalFamily f) : family_(f) {}

    double interp(const std::vector<double>& vals, double y) const {
        if (y < grid_.front() || y > grid_.back())
            throw DomainExceeded("custom functional queried outside its grid");
        if (y >= grid_.back()) return vals.back();
        const std::size_t i =
            std::upper_bound(grid_.begin(), grid_.end(), y) - grid_.begin() - 1;
        const double t = (y - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return vals[i] + t * (vals[i + 1] - vals[i]);
    }

    FunctionalFamily family_;
    unsigned order_ = 1;
    double t_ = 0.0;
    double y1_ = 0.0, y2_ = 0.0;
    std::vector<double> grid_, a_tab_, adot_tab_;
};

// ============================== reports ===================================

struct EstimateReport {
    std::string method; // "naive_influence" or "plug_in_npmle"
    double psi_hat = 0.0;
    double std_error = 0.0;
    double ci_level = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t n = 0;
    std::string functional;
};

// ============================ operations ==================================

/// psi(F) = sum_j w_j a(y_j) — exact finite sum.
inline double psi_of(const FunctionalSpec& spec, const DiscreteDistribution& F) {
    KahanSum s;
    for (std::size_t j = 0; j < F.size(); ++j)
        s.add(F.weights()[j] * spec.a(F.support()[j]));
    return s.value();
}

/// b(x) = a(x) - adot(x) - psi0: the influence function of the direct
/// estimator under standard-exponential noise.  `force` lets a caller
/// evaluate it for indicator families anyway (they would get
/// NotDifferentiable otherwise, which is the supported behaviour).
inline double influence_function(const FunctionalSpec& spec, double psi0, double x,
                                 bool force = false) {
    if (!spec.regular() && !force)
        throw NotDifferentiable("influence function undefined for " + spec.name());
    return spec.a(x) - spec.a_dot(x) - psi0;
}

/// Transformed values v_i = (a - adot)(X_i), via family fast paths so the
/// documented bit-for-bit identities hold (mean: x-1; mgf: (1-t)e^{tx}).
inline std::vector<double> transformed_values(const FunctionalSpec& spec,
                                              const Sample& xs) {
    if (!spec.regular())
        throw NotDifferentiable("direct estimator undefined for " + spec.name());
    std::vector<double> v(xs.n());
    switch (spec.family()) {
        case FunctionalFamily::mean:
            for (std::size_t i = 0; i < xs.n(); ++i) v[i] = xs.data()[i] - 1.0;
            break;
        case FunctionalFamily::mgf: {
            const double t = spec.mgf_t();
            for (std::size_t i = 0; i < xs.n(); ++i)
                v[i] = (1.0 - t) * std::exp(t * xs.data()[i]);
            break;
        }
        default:
            for (std::size_t i = 0; i < xs.n(); ++i)
                v[i] = spec.a_minus_adot(xs.data()[i]);
    }
    return v;
}

/// Direct estimator psi_tilde_n = (1/n) sum_i (a - adot)(X_i).
/// For the mean family this is exactly Xbar_n - 1; for mgf(t) exactly
/// (1-t) times the empirical m.g.f. at t.
inline double naive_estimate(const FunctionalSpec& spec, const Sample& xs) {
    switch (spec.family()) {
        case FunctionalFamily::mean:
            return mean_of(xs.data()) - 1.0;
        case FunctionalFamily::mgf: {
            const double t = spec.mgf_t();
            std::vector<double> e(xs.n());
            for (std::size_t i = 0; i < xs.n(); ++i) e[i] = std::exp(t * xs.data()[i]);
            return (1.0 - t) * mean_of(e);
        }
        default:
            if (!spec.regular())
                throw NotDifferentiable("direct estimator undefined for " + spec.name());
            return mean_of(transformed_values(spec, xs));
    }
}

/// S_n^2 = (1/n) sum_i (v_i - psi_tilde_n)^2, the empirical variance of the
/// transformed observations (1/n normalization so that the studentized CLT
/// statistic uses exactly this quantity).
inline double variance_estimate(const FunctionalSpec& spec, const Sample& xs) {
    if (xs.n() < 2) throw InsufficientData("variance estimate needs n >= 2");
    return population_variance(transformed_values(spec, xs));
}

/// Two-sided normal interval psi_tilde_n +/- z_{alpha/2} S_n / sqrt(n).
inline EstimateReport confidence_interval(const FunctionalSpec& spec, const Sample& xs,
                                          double level) {
    if (!(level > 0.0) || !(level < 1.0))
        throw InvalidArgument("confidence level must lie in (0,1)");
    if (xs.n() < 2) throw InsufficientData("confidence interval needs n >= 2");
    const double psi = naive_estimate(spec, xs);
    const double sn = std::sqrt(variance_estimate(spec, xs));
    const double se = sn / std::sqrt(static_cast<double>(xs.n()));
    const double z = normal_quantile(0.5 + 0.5 * level);
    EstimateReport rep;
    rep.method = "naive_influence";
    rep.psi_hat = psi;
    rep.std_error = se;
    rep.ci_level = level;
    rep.ci_lo = psi - z * se;
    rep.ci_hi = psi + z * se;
    rep.n = xs.n();
    rep.functional = spec.name();
    return rep;
}

/// First-order delta method for phi = g(psi): point estimate g(psi_tilde),
/// standard error |g'(psi_tilde)| S_n / sqrt(n).  A vanishing derivative
/// invalidates the first-order expansion and is reported as an error.
inline EstimateReport delta_method(const FunctionalSpec& spec,
                                   const std::function<double(double)>& g,
                                   const std::function<double(double)>& g_dot,
                                   const Sample& xs, double level) {
    if (!(level > 0.0) || !(level < 1.0))
        throw InvalidArgument("confidence level must lie in (0,1)");
    if (xs.n() < 2) throw InsufficientData("delta method needs n >= 2");
    const double psi = naive_estimate(spec, xs);
    const double deriv = g_dot(psi);
    if (!std::isfinite(deriv))
        throw InvalidArgument("g' not finite at the estimate");
    if (deriv == 0.0)
        throw DegenerateDerivative("g'(psi_hat) = 0: first-order delta method invalid");
    const double sn = std::sqrt(variance_estimate(spec, xs));
    const double se = std::fabs(deriv) * sn / std::sqrt(static_cast<double>(xs.n()));
    const double z = normal_quantile(0.5 + 0.5 * level);
    const double est = g(psi);
    EstimateReport rep;
    rep.method = "naive_influence";
    rep.psi_hat = est;
    rep.std_error = se;
    rep.ci_level = level;
    rep.ci_lo = est - z * se;
    rep.ci_hi = est + z * se;
    rep.n = xs.n();
    rep.functional = spec.name();
    return rep;
}

} // namespace deconv
