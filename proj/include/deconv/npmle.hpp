#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "functionals.hpp"
#include "model.hpp"
#include "stats.hpp"

namespace deconv {

// ====================== solver configuration/result =======================

struct NpmleConfig {
    enum class SupportMode { observations, observations_plus_grid };

    SupportMode candidate_support_mode = SupportMode::observations;
    std::size_t grid_points = 0;                            // extra uniform candidates
    std::optional<std::pair<double, double>> grid_bounds;   // default: sample range
    double tol_gradient = 1e-8;
    std::size_t max_iterations = 100000;
    double weight_prune_threshold = 1e-10;

    void validate() const {
        if (!(tol_gradient > 0.0)) throw InvalidArgument("tol_gradient must be > 0");
        if (!(weight_prune_threshold >= 0.0) || weight_prune_threshold >= 1.0)
            throw InvalidArgument("weight_prune_threshold must lie in [0, 1)");
        if (grid_bounds && !(grid_bounds->first < grid_bounds->second))
            throw InvalidArgument("grid bounds need lo < hi");
        if (candidate_support_mode == SupportMode::observations_plus_grid &&
            grid_points < 2)
            throw InvalidArgument("observations_plus_grid needs grid_points >= 2");
    }
};

struct NpmleResult {
    DiscreteDistribution estimate;
    double final_log_likelihood = 0.0;
    double gradient_sup = 0.0; // sup over candidates+probes of D(y)/n - 1
    std::size_t iterations = 0;
    bool converged = false;
};

// ===================== kernel-structured EM passes ========================
//
// Both kernels are piecewise exponential in x - y, so the per-iteration
// mixture densities p_i = sum_j w_j k(x_i - y_j) and gradient values
// D_j = sum_i k(x_i - y_j)/p_i reduce to running sums over the merged sorted
// sequences, O(n + m) per pass.  Each running sum is anchored at the most
// recently absorbed point and rescaled by exp(-gap/scale) when the anchor
// moves, keeping every exponent <= 0.

namespace detail {

inline void em_mixture_density(const NoiseKernel& k, const std::vector<double>& y,
                               const std::vector<double>& w,
                               const std::vector<double>& x, std::vector<double>& p) {
    const std::size_t m = y.size(), n = x.size();
    p.assign(n, 0.0);
    if (k.variant == KernelVariant::exponential) {
        const double lam = k.param;
        double S = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t j = 0;
        for (std::size_t i = 0; i < n; ++i) {
            while (j < m && y[j] <= x[i]) {
                S = have ? S * std::exp(lam * (anchor - y[j])) + w[j] : w[j];
                anchor = y[j];
                have = true;
                ++j;
            }
            p[i] = have ? lam * S * std::exp(-lam * (x[i] - anchor)) : 0.0;
        }
        return;
    }
    const double s = k.param;
    {
        double S = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t j = 0;
        for (std::size_t i = 0; i < n; ++i) {
            while (j < m && y[j] <= x[i]) {
                S = have ? S * std::exp((anchor - y[j]) / s) + w[j] : w[j];
                anchor = y[j];
                have = true;
                ++j;
            }
            if (have) p[i] += S * std::exp(-(x[i] - anchor) / s);
        }
    }
    {
        double S = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t j = m;
        for (std::size_t i = n; i-- > 0;) {
            while (j > 0 && y[j - 1] > x[i]) {
                --j;
                S = have ? S * std::exp((y[j] - anchor) / s) + w[j] : w[j];
                anchor = y[j];
                have = true;
            }
            if (have) p[i] += S * std::exp(-(anchor - x[i]) / s);
        }
    }
    const double c = 1.0 / (2.0 * s);
    for (double& v : p) v *= c;
}

inline void em_gradient_all(const NoiseKernel& k, const std::vector<double>& y,
                            const std::vector<double>& x, const std::vector<double>& p,
                            std::vector<double>& D) {
    const std::size_t m = y.size(), n = x.size();
    D.assign(m, 0.0);
    if (k.variant == KernelVariant::exponential) {
        const double lam = k.param;
        double T = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t i = n;
        for (std::size_t j = m; j-- > 0;) {
            while (i > 0 && x[i - 1] >= y[j]) {
                --i;
                T = have ? T * std::exp(-lam * (anchor - x[i])) + 1.0 / p[i]
                         : 1.0 / p[i];
                anchor = x[i];
                have = true;
            }
            D[j] = have ? lam * T * std::exp(-lam * (anchor - y[j])) : 0.0;
        }
        return;
    }
    const double s = k.param;
    {
        // observations at or above the candidate
        double T = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t i = n;
        for (std::size_t j = m; j-- > 0;) {
            while (i > 0 && x[i - 1] >= y[j]) {
                --i;
                T = have ? T * std::exp(-(anchor - x[i]) / s) + 1.0 / p[i] : 1.0 / p[i];
                anchor = x[i];
                have = true;
            }
            if (have) D[j] = T * std::exp(-(anchor - y[j]) / s);
        }
    }
    {
        // observations strictly below the candidate
        double T = 0.0, anchor = 0.0;
        bool have = false;
        std::size_t i = 0;
        for (std::size_t j = 0; j < m; ++j) {
            while (i < n && x[i] < y[j]) {
                T = have ? T * std::exp(-(x[i] - anchor) / s) + 1.0 / p[i] : 1.0 / p[i];
                anchor = x[i];
                have = true;
                ++i;
            }
            if (have) D[j] += T * std::exp(-(y[j] - anchor) / s);
        }
    }
    const double c = 1.0 / (2.0 * s);
    for (double& v : D) v *= c;
}

inline void check_positive_density(const std::vector<double>& p,
                                   const std::vector<double>& x) {
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!(p[i] > 0.0))
            throw ZeroDensityAtObservation("zero mixture density at observation x=" +
                                           std::to_string(x[i]));
}

/// Candidate grid: deduplicated sorted observations, optionally merged with
/// a uniform grid.
inline std::vector<double> candidate_support(const Sample& xs, const NpmleConfig& cfg) {
    std::vector<double> y;
    y.reserve(xs.n() + cfg.grid_points);
    for (double v : xs.sorted())
        if (y.empty() || v - y.back() >= DiscreteDistribution::merge_tol) y.push_back(v);
    if (cfg.candidate_support_mode == NpmleConfig::SupportMode::observations_plus_grid) {
        const double lo = cfg.grid_bounds ? cfg.grid_bounds->first : xs.min();
        const double hi = cfg.grid_bounds ? cfg.grid_bounds->second : xs.max();
        const double h = (hi - lo) / static_cast<double>(cfg.grid_points - 1);
        for (std::size_t g = 0; g < cfg.grid_points; ++g)
            y.push_back(lo + h * static_cast<double>(g));
        std::sort(y.begin(), y.end());
        std::vector<double> merged;
        merged.reserve(y.size());
        for (double v : y)
            if (merged.empty() || v - merged.back() >= DiscreteDistribution::merge_tol)
                merged.push_back(v);
        y = std::move(merged);
    }
    return y;
}

/// sup over `extra` candidates and 512 equispaced probes in
/// [min(x)-2, max(x)+2] of D(y)/n - 1, with p precomputed on the data.
inline double certificate_sup(const NoiseKernel& k, const std::vector<double>& cands,
                              const std::vector<double>& x,
                              const std::vector<double>& p) {
    const std::size_t n = x.size();
    std::vector<double> D;
    em_gradient_all(k, cands, x, p, D);
    double sup = -std::numeric_limits<double>::infinity();
    for (double d : D) sup = std::max(sup, d);

    constexpr std::size_t probes = 512;
    const double lo = x.front() - 2.0, hi = x.back() + 2.0;
    std::vector<double> pg(probes);
    for (std::size_t g = 0; g < probes; ++g)
        pg[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(probes - 1);
    em_gradient_all(k, pg, x, p, D);
    for (double d : D) sup = std::max(sup, d);

    return sup / static_cast<double>(n) - 1.0;
}

} // namespace detail

// ============================ public operations ===========================

/// Gradient (directional-derivative) function
/// D_F(y) = sum_i k(X_i - y) / p_F(X_i).  At an NPMLE, D <= n everywhere
/// with equality on the support.
inline double gradient_function(const MixtureDensity& md, const Sample& xs, double y) {
    KahanSum acc;
    for (double x : xs.data()) {
        const double p = mixture_density(md.mixing, md.kernel, x);
        if (!(p > 0.0))
            throw ZeroDensityAtObservation("zero mixture density at observation x=" +
                                           std::to_string(x));
        acc.add(md.kernel.density(x - y) / p);
    }
    return acc.value();
}

/// Discrete NPMLE by EM over a fixed candidate support.
///
/// Per iteration: w_j <- w_j D_j / n (then renormalized); the log-likelihood
/// is checked to be nondecreasing (to 1e-12 relative float slack).  The loop
/// stops when the candidate-set gradient certificate max_j D_j <= n(1+tol)
/// holds or max_iterations is reached.  Weights below the prune threshold
/// are then dropped, and the certificate is re-evaluated on the *returned*
/// estimate over all candidates plus 512 equispaced probe points in
/// [min(X)-2, max(X)+2]; `converged` reports that final certificate.
inline NpmleResult fit_npmle(const Sample& xs, const NoiseKernel& kernel,
                             const NpmleConfig& config = {}) {
    config.validate();
    const std::vector<double>& x = xs.sorted();
    const double n = static_cast<double>(xs.n());

    std::vector<double> y = detail::candidate_support(xs, config);
    std::vector<double> w(y.size(), 1.0 / static_cast<double>(y.size()));
    std::vector<double> p, D;

    double ll = 0.0, ll_prev = -std::numeric_limits<double>::infinity();
    std::size_t updates = 0;
    while (true) {
        detail::em_mixture_density(kernel, y, w, x, p);
        detail::check_positive_density(p, x);
        KahanSum acc;
        for (double pi : p) acc.add(std::log(pi));
        ll = acc.value();
        if (ll < ll_prev - 1e-12 * (1.0 + std::fabs(ll_prev)))
            throw std::logic_error("EM ascent property violated");
        ll_prev = ll;

        detail::em_gradient_all(kernel, y, x, p, D);
        double dmax = 0.0;
        for (double d : D) dmax = std::max(dmax, d);
        if (dmax / n - 1.0 <= config.tol_gradient || updates >= config.max_iterations)
            break;

        double sum = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            w[j] *= D[j] / n;
            sum += w[j];
        }
        for (double& wj : w) wj /= sum;
        ++updates;
    }

    // Prune negligible atoms, renormalize, and certify the pruned estimate.
    std::vector<double> ky, kw;
    double kept = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j)
        if (w[j] >= config.weight_prune_threshold) {
            ky.push_back(y[j]);
            kw.push_back(w[j]);
            kept += w[j];
        }
    if (ky.empty()) { // defensive: never triggers for a valid EM run
        ky = y;
        kw = w;
        kept = 1.0;
    }
    for (double& wj : kw) wj /= kept;

    detail::em_mixture_density(kernel, ky, kw, x, p);
    detail::check_positive_density(p, x);
    KahanSum acc;
    for (double pi : p) acc.add(std::log(pi));

    NpmleResult res{DiscreteDistribution(ky, kw), acc.value(), 0.0, updates, false};
    res.gradient_sup = detail::certificate_sup(kernel, y, x, p);
    res.converged = res.gradient_sup <= config.tol_gradient;
    return res;
}

/// Exhaustive oracle for tiny instances: search the weight simplex over the
/// observation support, discretized at `weight_step`.  Test harness only.
inline NpmleResult npmle_bruteforce(const Sample& xs, const NoiseKernel& kernel,
                                    double weight_step) {
    if (xs.n() > 5)
        throw InstanceTooLarge("brute-force oracle limited to n <= 5");
    if (!(weight_step > 0.0) || !(weight_step <= 1.0))
        throw InvalidArgument("weight_step must lie in (0, 1]");
    const double kf = 1.0 / weight_step;
    const std::size_t K = static_cast<std::size_t>(std::llround(kf));
    if (std::fabs(kf - static_cast<double>(K)) > 1e-9)
        throw InvalidArgument("weight_step must divide 1");

    const std::vector<double>& x = xs.sorted();
    const std::size_t n = x.size();
    std::vector<double> y;
    for (double v : x)
        if (y.empty() || v - y.back() >= DiscreteDistribution::merge_tol) y.push_back(v);
    const std::size_t m = y.size();

    std::vector<double> kern(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            kern[i * m + j] = kernel.density(x[i] - y[j]);

    std::vector<std::size_t> counts(m, 0), best(m, 0);
    double best_ll = -std::numeric_limits<double>::infinity();
    std::size_t evaluated = 0;

    // Depth-first enumeration of compositions of K into m parts.
    auto evaluate = [&]() {
        double llv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pi = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                pi += static_cast<double>(counts[j]) * kern[i * m + j];
            if (!(pi > 0.0)) return; // infeasible under exponential kernel
            llv += std::log(pi * weight_step);
        }
        ++evaluated;
        if (llv > best_ll) {
            best_ll = llv;
            best = counts;
        }
    };
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t j,
                                                            std::size_t left) {
        if (j + 1 == m) {
            counts[j] = left;
            evaluate();
            return;
        }
        for (std::size_t c = 0; c <= left; ++c) {
            counts[j] = c;
            rec(j + 1, left - c);
        }
    };
    rec(0, K);
    if (!std::isfinite(best_ll))
        throw ZeroDensityAtObservation("no feasible mixture on the oracle grid");

    std::vector<double> ky, kw;
    for (std::size_t j = 0; j < m; ++j)
        if (best[j] > 0) {
            ky.push_back(y[j]);
            kw.push_back(static_cast<double>(best[j]) / static_cast<double>(K));
        }
    NpmleResult res{DiscreteDistribution(ky, kw), best_ll, 0.0, evaluated, true};

    std::vector<double> p;
    detail::em_mixture_density(kernel, ky, kw, x, p);
    detail::check_positive_density(p, x);
    res.gradient_sup = detail::certificate_sup(kernel, y, x, p);
    return res;
}

/// Plug-in estimate psi(F_hat_n) — defined for every family (indicator
/// functionals included; no differentiability is needed for the point value).
inline double plug_in_estimate(const FunctionalSpec& spec, const NpmleResult& npmle) {
    return psi_of(spec, npmle.estimate);
}

} // namespace deconv
