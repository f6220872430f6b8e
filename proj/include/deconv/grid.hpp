#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "stats.hpp"

namespace deconv {

/// A function tabulated on a strictly increasing grid, with linear
/// interpolation between nodes.  Used for densities, influence functions and
/// CDFs on evaluation windows.
class GridFunction {
public:
    GridFunction(std::vector<double> grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (grid_.size() < 2 || grid_.size() != values_.size())
            throw InvalidArgument("grid function needs >= 2 nodes and matching values");
        for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
            if (!(grid_[i] < grid_[i + 1]))
                throw InvalidArgument("grid must be strictly increasing");
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgument("grid values must be finite");
    }

    static GridFunction uniform(double lo, double hi, std::size_t nodes,
                                std::vector<double> values) {
        return GridFunction(make_uniform_grid(lo, hi, nodes), std::move(values));
    }

    static std::vector<double> make_uniform_grid(double lo, double hi, std::size_t nodes) {
        if (!(lo < hi) || nodes < 2)
            throw InvalidArgument("uniform grid needs lo < hi and >= 2 nodes");
        std::vector<double> g(nodes);
        const double h = (hi - lo) / static_cast<double>(nodes - 1);
        for (std::size_t i = 0; i < nodes; ++i) g[i] = lo + h * static_cast<double>(i);
        g.back() = hi;
        return g;
    }

    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return grid_.size(); }
    double lo() const noexcept { return grid_.front(); }
    double hi() const noexcept { return grid_.back(); }

    /// Linear interpolation; constant extrapolation outside the grid.
    double operator()(double x) const {
        if (x <= grid_.front()) return values_.front();
        if (x >= grid_.back()) return values_.back();
        const std::size_t i =
            std::upper_bound(grid_.begin(), grid_.end(), x) - grid_.begin() - 1;
        const double t = (x - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return values_[i] + t * (values_[i + 1] - values_[i]);
    }

private:
    std::vector<double> grid_;
    std::vector<double> values_;
};

/// Trapezoid weights for an arbitrary increasing grid:
/// w_0 = h_0/2, w_i = (h_{i-1}+h_i)/2, w_last = h_{last}/2.
inline std::vector<double> make_uniform_grid(double lo, double hi, std::size_t nodes) {
    return GridFunction::make_uniform_grid(lo, hi, nodes);
}

inline std::vector<double> trapezoid_weights(const std::vector<double>& grid) {
    const std::size_t n = grid.size();
    if (n < 2) throw InvalidArgument("trapezoid weights need >= 2 nodes");
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

inline double trapezoid_integral(const std::vector<double>& grid,
                                 const std::vector<double>& values) {
    if (grid.size() != values.size())
        throw InvalidArgument("grid/values size mismatch");
    const std::vector<double> w = trapezoid_weights(grid);
    KahanSum s;
    for (std::size_t i = 0; i < grid.size(); ++i) s.add(w[i] * values[i]);
    return s.value();
}

inline double trapezoid_integral(const GridFunction& f) {
    return trapezoid_integral(f.grid(), f.values());
}

/// Hellinger distance between two densities tabulated on the same grid, in
/// the unnormalized convention d_H(p,q) = ||sqrt(p) - sqrt(q)||_2 (disjoint
/// supports give sqrt(2)).  Negative density values smaller than -1e-12 are
/// rejected; tiny negatives from roundoff clamp to 0.
inline double hellinger_distance(const GridFunction& p, const GridFunction& q) {
    if (p.grid() != q.grid())
        throw InvalidArgument("hellinger needs densities on a common grid");
    std::vector<double> integrand(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        double a = p.values()[i], b = q.values()[i];
        if (a < -1e-12 || b < -1e-12)
            throw InvalidArgument("hellinger needs nonnegative densities");
        a = std::max(a, 0.0);
        b = std::max(b, 0.0);
        const double d = std::sqrt(a) - std::sqrt(b);
        integrand[i] = d * d;
    }
    return std::sqrt(trapezoid_integral(p.grid(), integrand));
}

/// First Wasserstein distance between two CDFs on the same grid:
/// W1(F,G) = \int |F - G|.  Each input must be a CDF: values in [-1e-9, 1+1e-9]
/// and nondecreasing up to 1e-9 slack.
inline double wasserstein1_distance(const GridFunction& F, const GridFunction& G) {
    if (F.grid() != G.grid())
        throw InvalidArgument("wasserstein1 needs CDFs on a common grid");
    auto check = [](const GridFunction& H) {
        const std::vector<double>& v = H.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] < -1e-9 || v[i] > 1.0 + 1e-9)
                throw NotACdf("CDF values must lie in [0,1]");
            if (i > 0 && v[i] < v[i - 1] - 1e-9)
                throw NotACdf("CDF values must be nondecreasing");
        }
    };
    check(F);
    check(G);
    std::vector<double> integrand(F.size());
    for (std::size_t i = 0; i < F.size(); ++i)
        integrand[i] = std::fabs(F.values()[i] - G.values()[i]);
    return trapezoid_integral(F.grid(), integrand);
}

inline double hellinger(const GridFunction& p, const GridFunction& q) {
    return hellinger_distance(p, q);
}

inline double wasserstein1(const GridFunction& F, const GridFunction& G) {
    return wasserstein1_distance(F, G);
}

} // namespace deconv
