#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace deconv {

// ============================ noise kernels ===============================
//
// The observation model is X = Y + Z with Y ~ F (latent, estimand) and Z an
// independent noise draw from one of two densities:
//   exponential(rate lambda):  k(z) = lambda e^{-lambda z}  for z >= 0
//   laplace(scale s):          k(z) = e^{-|z|/s} / (2s)
// All convolution, likelihood and simulation code is driven through this
// struct so the two variants share one code path.

enum class KernelVariant { exponential, laplace };

struct NoiseKernel {
    KernelVariant variant;
    double param; // rate lambda (exponential) or scale s (laplace)

    static NoiseKernel exponential(double rate) {
        if (!(rate > 0.0) || !std::isfinite(rate))
            throw InvalidKernel("exponential kernel needs rate > 0");
        return {KernelVariant::exponential, rate};
    }
    static NoiseKernel laplace(double scale) {
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw InvalidKernel("laplace kernel needs scale > 0");
        return {KernelVariant::laplace, scale};
    }

    double density(double z) const {
        if (variant == KernelVariant::exponential)
            return (z >= 0.0) ? param * std::exp(-param * z) : 0.0;
        return std::exp(-std::fabs(z) / param) / (2.0 * param);
    }

    /// log k(z); -inf where the density vanishes.
    double log_density(double z) const {
        if (variant == KernelVariant::exponential)
            return (z >= 0.0) ? std::log(param) - param * z
                              : -std::numeric_limits<double>::infinity();
        return -std::fabs(z) / param - std::log(2.0 * param);
    }

    /// Characteristic length used for quadrature windows (1/lambda or s).
    double scale() const {
        return (variant == KernelVariant::exponential) ? 1.0 / param : param;
    }

    double mean() const {
        return (variant == KernelVariant::exponential) ? 1.0 / param : 0.0;
    }

    double variance() const {
        const double s = scale();
        return (variant == KernelVariant::exponential) ? s * s : 2.0 * s * s;
    }

    /// Probability mass of the noise outside [lo - y, hi - y] for a source
    /// at y, i.e. how much of k(. - y) a window [lo, hi] fails to cover.
    double tail_mass_outside(double y, double lo, double hi) const {
        if (variant == KernelVariant::exponential) {
            double miss = 0.0;
            if (lo > y) miss += 1.0 - std::exp(-param * (lo - y));
            miss += std::exp(-param * std::max(0.0, hi - y));
            return std::min(1.0, miss);
        }
        double miss = 0.0;
        miss += 0.5 * std::exp(-std::max(0.0, y - lo) / param);
        miss += 0.5 * std::exp(-std::max(0.0, hi - y) / param);
        if (lo > y || hi < y) miss = std::min(1.0, miss + 0.5);
        return miss;
    }

    std::string name() const {
        return variant == KernelVariant::exponential ? "exponential" : "laplace";
    }
};

// ======================== discrete distributions ==========================

/// Finitely supported probability distribution on the real line.  Support is
/// kept sorted; atoms closer than `merge_tol` are merged (weights added).
/// Weights must be nonnegative and sum to 1 within 1e-12; they are rescaled
/// to sum to exactly 1 afterwards.
class DiscreteDistribution {
public:
    static constexpr double merge_tol = 1e-12;

    DiscreteDistribution(std::vector<double> support, std::vector<double> weights) {
        if (support.empty() || support.size() != weights.size())
            throw InvalidDistribution("support/weights must be nonempty and equal length");
        std::vector<std::size_t> idx(support.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });

        double wsum = 0.0;
        for (std::size_t i : idx) {
            const double y = support[i], w = weights[i];
            if (!std::isfinite(y)) throw InvalidDistribution("non-finite support point");
            if (!(w >= 0.0) || !std::isfinite(w))
                throw InvalidDistribution("weights must be finite and >= 0");
            wsum += w;
            if (!support_.empty() && y - support_.back() < merge_tol)
                weights_.back() += w;
            else {
                support_.push_back(y);
                weights_.push_back(w);
            }
        }
        if (std::fabs(wsum - 1.0) > 1e-12)
            throw InvalidDistribution("weights must sum to 1 within 1e-12");
        for (double& w : weights_) w /= wsum;
    }

    const std::vector<double>& support() const noexcept { return support_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return support_.size(); }
    double min_support() const noexcept { return support_.front(); }
    double max_support() const noexcept { return support_.back(); }

    double mean() const {
        KahanSum s;
        for (std::size_t j = 0; j < size(); ++j) s.add(weights_[j] * support_[j]);
        return s.value();
    }

    double variance() const {
        const double m = mean();
        KahanSum s;
        for (std::size_t j = 0; j < size(); ++j) {
            const double d = support_[j] - m;
            s.add(weights_[j] * d * d);
        }
        return s.value();
    }

    /// F(y) = P(Y <= y).
    double cdf(double y) const {
        double c = 0.0;
        for (std::size_t j = 0; j < size() && support_[j] <= y; ++j) c += weights_[j];
        return c;
    }

private:
    std::vector<double> support_;
    std::vector<double> weights_;
};

// ================================ samples =================================

/// Observed data (i.i.d. draws of X).  Stores both insertion order and a
/// sorted copy; all entries must be finite.
class Sample {
public:
    explicit Sample(std::vector<double> data) : data_(std::move(data)) {
        if (data_.empty()) throw InvalidSample("sample must be nonempty");
        for (double x : data_)
            if (!std::isfinite(x)) throw InvalidSample("sample contains non-finite value");
        sorted_ = data_;
        std::sort(sorted_.begin(), sorted_.end());
    }

    const std::vector<double>& data() const noexcept { return data_; }
    const std::vector<double>& sorted() const noexcept { return sorted_; }
    std::size_t n() const noexcept { return data_.size(); }
    double min() const noexcept { return sorted_.front(); }
    double max() const noexcept { return sorted_.back(); }

private:
    std::vector<double> data_;
    std::vector<double> sorted_;
};

// ========================= mixture densities ==============================

/// p_F(x) = sum_j w_j k(x - y_j).  Direct sum; every term is bounded by the
/// kernel mode, so the accumulation is stable.
inline double mixture_density(const DiscreteDistribution& f, const NoiseKernel& k, double x) {
    KahanSum s;
    for (std::size_t j = 0; j < f.size(); ++j)
        s.add(f.weights()[j] * k.density(x - f.support()[j]));
    return s.value();
}

/// log p_F(x), evaluated by log-sum-exp when the linear-space density
/// underflows (p < 1e-300).  Returns -inf only when the density is exactly
/// zero (e.g. exponential kernel with all atoms above x).
inline double log_mixture_density(const DiscreteDistribution& f, const NoiseKernel& k, double x) {
    const double p = mixture_density(f, k, x);
    if (p >= 1e-300) return std::log(p);
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double w = f.weights()[j];
        terms[j] = (w > 0.0) ? std::log(w) + k.log_density(x - f.support()[j])
                             : -std::numeric_limits<double>::infinity();
        m = std::max(m, terms[j]);
    }
    if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
    KahanSum s;
    for (double t : terms) s.add(std::exp(t - m));
    return m + std::log(s.value());
}

/// Total log-likelihood sum_i log p_F(X_i).  Throws if some observation has
/// zero density under (F, k) — the data are impossible under the model.
inline double log_likelihood(const DiscreteDistribution& f, const NoiseKernel& k,
                             const Sample& xs) {
    KahanSum s;
    for (double x : xs.data()) {
        const double lp = log_mixture_density(f, k, x);
        if (!std::isfinite(lp))
            throw ZeroDensityAtObservation("observation x=" + std::to_string(x) +
                                           " has zero density under the mixture");
        s.add(lp);
    }
    return s.value();
}

/// Batch evaluation of p_F at an ascending list of points in O(m + N).
///
/// Both kernels are piecewise exponentials, so the atom sums telescope: a
/// running sum anchored at the most recent atom is rescaled by
/// exp(-(gap)/scale) when the anchor advances.  Every exponent is <= 0, all
/// terms are positive — no overflow and no cancellation.
inline std::vector<double> mixture_density_sorted(const DiscreteDistribution& f,
                                                  const NoiseKernel& k,
                                                  const std::vector<double>& xs_sorted) {
    const std::vector<double>& y = f.support();
    const std::vector<double>& w = f.weights();
    const std::size_t m = y.size(), N = xs_sorted.size();
    std::vector<double> out(N, 0.0);

    if (k.variant == KernelVariant::exponential) {
        const double lam = k.param;
        double S = 0.0, anchor = 0.0; // S = sum_{y_j <= x} w_j e^{lam (y_j - anchor)}
        std::size_t j = 0;
        bool have = false;
        for (std::size_t i = 0; i < N; ++i) {
            const double x = xs_sorted[i];
            while (j < m && y[j] <= x) {
                if (have) S = S * std::exp(lam * (anchor - y[j])) + w[j];
                else S = w[j];
                anchor = y[j];
                have = true;
                ++j;
            }
            out[i] = have ? lam * S * std::exp(-lam * (x - anchor)) : 0.0;
        }
        return out;
    }

    // laplace: left contribution (atoms <= x) forward, right contribution backward
    const double s = k.param;
    {
        double S = 0.0, anchor = 0.0;
        std::size_t j = 0;
        bool have = false;
        for (std::size_t i = 0; i < N; ++i) {
            const double x = xs_sorted[i];
            while (j < m && y[j] <= x) {
                if (have) S = S * std::exp((anchor - y[j]) / s) + w[j];
                else S = w[j];
                anchor = y[j];
                have = true;
                ++j;
            }
            if (have) out[i] = S * std::exp(-(x - anchor) / s);
        }
    }
    {
        double S = 0.0, anchor = 0.0;
        std::size_t j = m;
        bool have = false;
        for (std::size_t i = N; i-- > 0;) {
            const double x = xs_sorted[i];
            while (j > 0 && y[j - 1] > x) {
                --j;
                if (have) S = S * std::exp((y[j] - anchor) / s) + w[j];
                else S = w[j];
                anchor = y[j];
                have = true;
            }
            if (have) out[i] += S * std::exp(-(anchor - x) / s);
        }
    }
    for (double& v : out) v /= 2.0 * s;
    return out;
}

/// Convenience pair bundling a mixing distribution with its noise kernel.
struct MixtureDensity {
    DiscreteDistribution mixing;
    NoiseKernel kernel;

    double operator()(double x) const { return mixture_density(mixing, kernel, x); }
};

inline double mixture_density(const MixtureDensity& md, double x) { return md(x); }

inline double log_likelihood(const MixtureDensity& md, const Sample& xs) {
    return log_likelihood(md.mixing, md.kernel, xs);
}

// ============================== simulation ================================

/// Draw n observations X = Y + Z.  Per observation: one uniform for the atom
/// of Y (inverse CDF over cumulative weights), one uniform for Z:
///   exponential: z = -log(1 - u)/lambda
///   laplace:     z = -s * sign(u - 1/2) * log(1 - 2|u - 1/2|)
/// Uniforms live in the open interval (0,1), so z is always finite.
inline Sample simulate(const DiscreteDistribution& f, const NoiseKernel& k,
                       std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("simulate needs n >= 1");
    std::vector<double> cum(f.size());
    double c = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        c += f.weights()[j];
        cum[j] = c;
    }
    cum.back() = 1.0; // guard the last bin against rounding

    Rng gen(seed);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double uy = gen.uniform();
        const std::size_t j =
            std::lower_bound(cum.begin(), cum.end(), uy) - cum.begin();
        const double y = f.support()[std::min(j, f.size() - 1)];

        const double uz = gen.uniform();
        double z;
        if (k.variant == KernelVariant::exponential)
            z = -std::log1p(-uz) / k.param;
        else {
            const double d = uz - 0.5;
            const double mag = -k.param * std::log1p(-2.0 * std::fabs(d));
            z = (d > 0.0) ? mag : (d < 0.0 ? -mag : 0.0);
        }
        xs[i] = y + z;
    }
    return Sample(std::move(xs));
}

} // namespace deconv
