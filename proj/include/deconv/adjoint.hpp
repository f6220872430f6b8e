#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "functionals.hpp"
#include "grid.hpp"
#include "model.hpp"
#include "stats.hpp"

namespace deconv {

// Numerical probes of the score-operator calculus: the conditional
// expectation operator A_F h = E[h(Y)|X], its adjoint A* b = E[b(X)|Y], the
// influence-function identity under standard-exponential noise, a
// least-squares solver for the adjoint (differentiability) equation
// E[b(X)|Y=y] = a(y) - psi(F0), and the worst sub-direction construction.

namespace detail {

/// \int phi(t) kappa(t) dt by composite trapezoid with the cell containing
/// the kink point c split in two; phi is interpolated linearly at c and
/// kappa takes its one-sided limits there.  Both noise kernels are smooth
/// away from z = 0, so splitting one cell restores O(h^2) accuracy.
template <class Kappa>
inline double kink_split_trapezoid(const std::vector<double>& t,
                                   const std::vector<double>& phi, Kappa&& kappa,
                                   double c, double kappa_left, double kappa_right) {
    KahanSum s;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double a = t[i], b = t[i + 1];
        if (c > a && c < b) {
            const double frac = (c - a) / (b - a);
            const double phic = phi[i] + frac * (phi[i + 1] - phi[i]);
            s.add(0.5 * (c - a) * (phi[i] * kappa(a) + phic * kappa_left));
            s.add(0.5 * (b - c) * (phic * kappa_right + phi[i + 1] * kappa(b)));
        } else {
            // one-sided kernel values when the kink sits exactly on a node
            const double ka = (a == c) ? kappa_right : kappa(a);
            const double kb = (b == c) ? kappa_left : kappa(b);
            s.add(0.5 * (b - a) * (phi[i] * ka + phi[i + 1] * kb));
        }
    }
    return s.value();
}

inline void require_density(const GridFunction& f) {
    for (double v : f.values())
        if (v < -1e-12) throw InvalidDistribution("density values must be nonnegative");
    const double total = trapezoid_integral(f);
    if (std::fabs(total - 1.0) > 1e-6)
        throw InvalidDistribution("density must integrate to 1 within 1e-6 on its grid");
}

} // namespace detail

// ============================ score operator ==============================

/// A_F h (x) = E[h(Y) | X = x] = \int h(y) k(x-y) f(y) dy / \int k(x-y) f(y) dy
/// for an absolutely continuous mixing density f tabulated on a grid.
inline double operator_a(const GridFunction& f_density, const NoiseKernel& kernel,
                         const GridFunction& h, double x) {
    if (f_density.grid() != h.grid())
        throw InvalidArgument("operator_a needs h and f on a common grid");
    detail::require_density(f_density);

    const std::vector<double>& y = f_density.grid();
    std::vector<double> num(y.size()), den(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        den[i] = f_density.values()[i];
        num[i] = h.values()[i] * den[i];
    }
    auto kappa = [&](double yv) { return kernel.density(x - yv); };
    const double k0 = kernel.density(0.0);
    const double k_right =
        kernel.variant == KernelVariant::exponential ? 0.0 : k0; // y just above x
    const double d =
        detail::kink_split_trapezoid(y, den, kappa, x, k0, k_right);
    if (!(d > 0.0))
        throw ZeroMixtureDensity("mixture density vanishes at x=" + std::to_string(x));
    const double n = detail::kink_split_trapezoid(y, num, kappa, x, k0, k_right);
    return n / d;
}

/// A* b (y) = E[b(X) | Y = y] = \int b(x) k(x-y) dx over the tabulation
/// window of b.  The window must capture all but 1e-10 of the kernel mass
/// around y.
inline double adjoint_apply(const GridFunction& b, const NoiseKernel& kernel, double y) {
    if (kernel.tail_mass_outside(y, b.lo(), b.hi()) > 1e-10)
        throw WindowTooNarrow("kernel mass outside the tabulation window exceeds 1e-10");
    auto kappa = [&](double xv) { return kernel.density(xv - y); };
    const double k0 = kernel.density(0.0);
    const double k_left =
        kernel.variant == KernelVariant::exponential ? 0.0 : k0; // x just below y
    return detail::kink_split_trapezoid(b.grid(), b.values(), kappa, y, k_left, k0);
}

// ================== influence identity (exponential noise) ================

/// Verifies that b(x) = a(x) - adot(x) - psi(F0) solves the adjoint equation
/// E[b(X)|Y=y] = a(y) - psi(F0) under standard-exponential noise: returns
/// the max over probes of |A*b(y) - (a(y) - psi(F0))|.  b is tabulated
/// internally on a fine grid spanning [lo(F0), hi(F0) + 40].
inline double check_exponential_influence(const FunctionalSpec& spec,
                                          const GridFunction& f0_density,
                                          const std::vector<double>& y_probes) {
    if (!spec.regular())
        throw NotDifferentiable("influence identity needs a differentiable functional");
    detail::require_density(f0_density);
    const NoiseKernel kernel = NoiseKernel::exponential(1.0);

    std::vector<double> af(f0_density.size());
    for (std::size_t i = 0; i < f0_density.size(); ++i)
        af[i] = spec.a(f0_density.grid()[i]) * f0_density.values()[i];
    const double psi0 = trapezoid_integral(f0_density.grid(), af);

    constexpr std::size_t fine_nodes = 65537;
    const double lo = f0_density.lo(), hi = f0_density.hi() + 40.0;
    std::vector<double> xg = GridFunction::make_uniform_grid(lo, hi, fine_nodes);
    std::vector<double> bv(fine_nodes);
    for (std::size_t i = 0; i < fine_nodes; ++i)
        bv[i] = spec.a(xg[i]) - spec.a_dot(xg[i]) - psi0;
    const GridFunction b(std::move(xg), std::move(bv));

    double worst = 0.0;
    for (double y : y_probes) {
        const double lhs = adjoint_apply(b, kernel, y);
        const double rhs = spec.a(y) - psi0;
        worst = std::max(worst, std::fabs(lhs - rhs));
    }
    return worst;
}

// ======================= adjoint equation solver ==========================

struct AdjointSolveReport {
    std::string kernel;
    std::string functional;
    std::vector<std::size_t> grid_sizes;
    std::vector<double> residuals; // weighted L2(F0) norm per grid
    GridFunction solution_b;       // finest grid
    double b_l2_p0_norm = 0.0;
};

namespace detail {

inline AdjointSolveReport solve_adjoint_core(
    const FunctionalSpec& spec, const NoiseKernel& kernel,
    const std::vector<double>& y_nodes, const std::vector<double>& mu, double psi0,
    std::pair<double, double> x_window, const std::vector<std::size_t>& grid_sizes) {
    const double lo = x_window.first, hi = x_window.second;
    if (!(lo < hi)) throw InvalidArgument("x_window needs lo < hi");
    if (grid_sizes.empty()) throw InvalidArgument("grid_sizes must be nonempty");
    for (std::size_t g = 0; g < grid_sizes.size(); ++g) {
        if (grid_sizes[g] < 2) throw InvalidArgument("grid sizes must be >= 2");
        if (g > 0 && grid_sizes[g] <= grid_sizes[g - 1])
            throw InvalidArgument("grid_sizes must be strictly increasing");
    }
    for (double yj : y_nodes)
        if (kernel.tail_mass_outside(yj, lo, hi) > 1e-10)
            throw WindowTooNarrow("x_window misses kernel mass around a mixing node");

    const std::size_t rows = y_nodes.size();
    Eigen::VectorXd sqrt_mu(rows), rhs(rows);
    for (std::size_t j = 0; j < rows; ++j) {
        sqrt_mu[j] = std::sqrt(mu[j]);
        rhs[j] = sqrt_mu[j] * (spec.a(y_nodes[j]) - psi0);
    }

    std::vector<double> residuals;
    std::vector<double> finest_grid, finest_b;
    for (std::size_t m : grid_sizes) {
        const std::vector<double> xg = GridFunction::make_uniform_grid(lo, hi, m);
        const std::vector<double> xw = trapezoid_weights(xg);
        Eigen::MatrixXd K(rows, m);
        for (std::size_t j = 0; j < rows; ++j)
            for (std::size_t i = 0; i < m; ++i)
                K(j, i) = sqrt_mu[j] * xw[i] * kernel.density(xg[i] - y_nodes[j]);

        Eigen::BDCSVD<Eigen::MatrixXd> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-10);
        if (svd.rank() == 0)
            throw IllConditioned("singular-value cutoff removed every mode");
        const Eigen::VectorXd b = svd.solve(rhs);
        residuals.push_back((K * b - rhs).norm());

        if (m == grid_sizes.back()) {
            finest_grid = xg;
            finest_b.assign(b.data(), b.data() + b.size());
        }
    }

    // Diagnostic L2(P0) norm of the finest solution.
    const std::vector<double> xw = trapezoid_weights(finest_grid);
    KahanSum norm2;
    for (std::size_t i = 0; i < finest_grid.size(); ++i) {
        KahanSum p0;
        for (std::size_t j = 0; j < rows; ++j)
            p0.add(mu[j] * kernel.density(finest_grid[i] - y_nodes[j]));
        norm2.add(xw[i] * finest_b[i] * finest_b[i] * p0.value());
    }

    AdjointSolveReport rep{
        kernel.name() + ":" + detail::format_param(kernel.param),
        spec.name(),
        grid_sizes,
        std::move(residuals),
        GridFunction(std::move(finest_grid), std::move(finest_b)),
        std::sqrt(std::max(0.0, norm2.value()))};
    return rep;
}

} // namespace detail

/// Adjoint-equation least squares with a discrete mixing distribution: the
/// y-nodes are the atoms, weighted by their masses.  Residuals decreasing to
/// zero under x-grid refinement is evidence that the functional admits a
/// square-integrable adjoint solution (hence sqrt(n)-estimability); residuals
/// bounded away from zero is evidence against.  This is a numerical probe,
/// not a proof, and the report never claims more.
inline AdjointSolveReport solve_adjoint(const FunctionalSpec& spec,
                                        const NoiseKernel& kernel,
                                        const DiscreteDistribution& F0,
                                        std::pair<double, double> x_window,
                                        const std::vector<std::size_t>& grid_sizes) {
    return detail::solve_adjoint_core(spec, kernel, F0.support(), F0.weights(),
                                      psi_of(spec, F0), x_window, grid_sizes);
}

/// Same probe with an absolutely continuous mixing density: y-nodes are the
/// tabulation grid, weighted by trapezoid mass mu_j = w_j f0(y_j)
/// (normalized).
inline AdjointSolveReport solve_adjoint(const FunctionalSpec& spec,
                                        const NoiseKernel& kernel,
                                        const GridFunction& f0_density,
                                        std::pair<double, double> x_window,
                                        const std::vector<std::size_t>& grid_sizes) {
    detail::require_density(f0_density);
    const std::vector<double>& y = f0_density.grid();
    const std::vector<double> tw = trapezoid_weights(y);
    std::vector<double> mu(y.size());
    double total = 0.0;
    std::vector<double> af(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
        mu[j] = tw[j] * std::max(0.0, f0_density.values()[j]);
        total += mu[j];
        af[j] = spec.a(y[j]) * f0_density.values()[j];
    }
    for (double& m : mu) m /= total;
    const double psi0 = trapezoid_integral(y, af);
    return detail::solve_adjoint_core(spec, kernel, y, mu, psi0, x_window, grid_sizes);
}

// ========================= worst sub-directions ===========================

struct SubdirectionReport {
    double alpha = 0.0;
    GridFunction h;
    double mean_under_Falpha = 0.0;  // \int h dF_alpha, target 0
    double max_abs_ah_minus_b = 0.0; // sup_x |A_{F_alpha} h (x) - b_{F_alpha}(x)|
};

/// Least-favorable perturbation direction under standard-exponential noise:
///   h(y) = a(y) - g'(y)/f_alpha(y) - psi(F_alpha),
///   g(y) = adot(y) * \int_{u<=y} e^{-(y-u)} f_alpha(u) du,
/// on the common grid of f and f0, with f_alpha = alpha f + (1-alpha) f0.
///
/// Boundary convention: adot is taken to vanish beyond the right edge of the
/// tabulated support, so g carries its off-support limit 0 at the last node.
/// With that convention the trapezoid/centered-difference discretization
/// telescopes exactly and the perturbation is mass-neutral on the window:
/// sum_i w_i g'_i = g_last - g_first = 0, hence \int h dF_alpha = 0 to
/// rounding.  Without it a bounded support leaks boundary mass of order
/// adot(y_max) * \int e^{-(y_max - u)} dF_alpha.
inline SubdirectionReport worst_subdirection(const FunctionalSpec& spec,
                                             const GridFunction& f,
                                             const GridFunction& f0, double alpha) {
    if (!spec.regular())
        throw NotDifferentiable("sub-direction construction needs a_dot");
    if (!(alpha >= 0.0) || !(alpha < 1.0))
        throw InvalidArgument("alpha must lie in [0,1)");
    if (f.grid() != f0.grid())
        throw InvalidArgument("f and f0 must share one grid");

    const std::vector<double>& y = f.grid();
    const std::size_t N = y.size();
    std::vector<double> fa(N);
    for (std::size_t i = 0; i < N; ++i) {
        fa[i] = alpha * f.values()[i] + (1.0 - alpha) * f0.values()[i];
        if (!(fa[i] > 0.0))
            throw NotAbsolutelyContinuous("f_alpha must be strictly positive on the grid");
    }
    const GridFunction fa_gf(y, fa);
    detail::require_density(fa_gf);

    // I(y) = \int_{u<=y} e^{-(y-u)} f_alpha(u) du by a decaying running
    // trapezoid: I_{i+1} = e^{-h}(I_i + (h/2) f_i) + (h/2) f_{i+1}.
    std::vector<double> I(N, 0.0);
    for (std::size_t i = 0; i + 1 < N; ++i) {
        const double h = y[i + 1] - y[i];
        I[i + 1] = std::exp(-h) * (I[i] + 0.5 * h * fa[i]) + 0.5 * h * fa[i + 1];
    }

    std::vector<double> g(N);
    for (std::size_t i = 0; i < N; ++i) g[i] = spec.a_dot(y[i]) * I[i];
    g.back() = 0.0; // off-support limit of adot at the right edge (see above)

    std::vector<double> gp(N);
    gp.front() = (g[1] - g[0]) / (y[1] - y[0]);
    for (std::size_t i = 1; i + 1 < N; ++i)
        gp[i] = (g[i + 1] - g[i - 1]) / (y[i + 1] - y[i - 1]);
    gp.back() = (g[N - 1] - g[N - 2]) / (y[N - 1] - y[N - 2]);

    const std::vector<double> tw = trapezoid_weights(y);
    KahanSum psi_acc;
    for (std::size_t i = 0; i < N; ++i) psi_acc.add(tw[i] * spec.a(y[i]) * fa[i]);
    const double psi_alpha = psi_acc.value();

    std::vector<double> h(N);
    for (std::size_t i = 0; i < N; ++i)
        h[i] = spec.a(y[i]) - gp[i] / fa[i] - psi_alpha;
    const GridFunction h_gf(y, h);

    KahanSum mean_acc;
    for (std::size_t i = 0; i < N; ++i) mean_acc.add(tw[i] * h[i] * fa[i]);

    const NoiseKernel kernel = NoiseKernel::exponential(1.0);
    double gap = 0.0;
    constexpr std::size_t test_points = 64;
    for (std::size_t kidx = 0; kidx < test_points; ++kidx) {
        const double x = y.front() + (y.back() - y.front()) *
                                         (static_cast<double>(kidx) + 0.5) /
                                         static_cast<double>(test_points);
        const double lhs = operator_a(fa_gf, kernel, h_gf, x);
        const double rhs = spec.a(x) - spec.a_dot(x) - psi_alpha;
        gap = std::max(gap, std::fabs(lhs - rhs));
    }

    return SubdirectionReport{alpha, h_gf, mean_acc.value(), gap};
}

// =========================== rate diagnostics =============================

struct RateDiagnostic {
    double slope = 0.0;
    double slope_se = 0.0;
    std::vector<double> w1_ratio; // W1 / (sqrt(d_H) log^{3/4}(1/d_H)), if W1 given
};

/// Log-log regression of mean Hellinger distances on n, plus (optionally)
/// the Wasserstein-Hellinger ratios that the transport bound says must stay
/// bounded.  Needs >= 3 points with distinct n and d_H in (0,1) for the
/// ratio variant.
inline RateDiagnostic hellinger_rate_diagnostic(
    const std::vector<std::pair<double, double>>& n_dh,
    const std::vector<double>& w1 = {}) {
    if (n_dh.size() < 3)
        throw InsufficientPoints("rate diagnostic needs >= 3 (n, d_H) points");
    std::vector<double> lx(n_dh.size()), ly(n_dh.size());
    for (std::size_t i = 0; i < n_dh.size(); ++i) {
        if (!(n_dh[i].first > 0.0) || !(n_dh[i].second > 0.0))
            throw InvalidArgument("rate diagnostic needs positive n and d_H");
        lx[i] = std::log(n_dh[i].first);
        ly[i] = std::log(n_dh[i].second);
    }
    LinearFit fit;
    try {
        fit = least_squares_line(lx, ly);
    } catch (const InsufficientData&) {
        throw InsufficientPoints("rate diagnostic needs distinct n values");
    }

    RateDiagnostic diag;
    diag.slope = fit.slope;
    diag.slope_se = fit.slope_se;
    if (!w1.empty()) {
        if (w1.size() != n_dh.size())
            throw InvalidArgument("w1 list must match the (n, d_H) list");
        for (std::size_t i = 0; i < w1.size(); ++i) {
            const double dh = n_dh[i].second;
            if (!(dh < 1.0))
                throw InvalidArgument("Wasserstein-Hellinger ratio needs d_H < 1");
            diag.w1_ratio.push_back(
                w1[i] / (std::sqrt(dh) * std::pow(std::log(1.0 / dh), 0.75)));
        }
    }
    return diag;
}

} // namespace deconv
