#include <catch2/catch_amalgamated.hpp>

#include <deconv/grid.hpp>
#include <deconv/model.hpp>

#include <cmath>
#include <vector>

using namespace deconv;

TEST_CASE("grid function interpolates linearly and extrapolates flat", "[grid]") {
  GridFunction g({0.0, 1.0, 3.0}, {0.0, 2.0, 2.0});
  REQUIRE(g(0.0) == 0.0);
  REQUIRE(g(0.5) == 1.0);
  REQUIRE(g(1.0) == 2.0);
  REQUIRE(g(2.0) == 2.0);
  REQUIRE(g(-5.0) == 0.0);   // constant extrapolation left
  REQUIRE(g(10.0) == 2.0);   // constant extrapolation right
  REQUIRE(g.lo() == 0.0);
  REQUIRE(g.hi() == 3.0);
  REQUIRE(g.size() == 3);
}

TEST_CASE("grid function validates its inputs", "[grid]") {
  REQUIRE_THROWS_AS(GridFunction({0.0}, {1.0}), InvalidArgument);
  REQUIRE_THROWS_AS(GridFunction({0.0, 0.0}, {1.0, 2.0}), InvalidArgument);
  REQUIRE_THROWS_AS(GridFunction({1.0, 0.0}, {1.0, 2.0}), InvalidArgument);
  REQUIRE_THROWS_AS(GridFunction({0.0, 1.0}, {1.0}), InvalidArgument);
  REQUIRE_THROWS_AS(GridFunction({0.0, 1.0}, {1.0, std::nan("")}), InvalidArgument);
}

TEST_CASE("uniform grid builder hits both endpoints exactly", "[grid]") {
  const std::vector<double> g = make_uniform_grid(0.0, 1.0, 513);
  REQUIRE(g.size() == 513);
  REQUIRE(g.front() == 0.0);
  REQUIRE(g.back() == 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) REQUIRE(g[i] > g[i - 1]);
  REQUIRE_THROWS_AS(make_uniform_grid(1.0, 0.0, 10), InvalidArgument);
  REQUIRE_THROWS_AS(make_uniform_grid(0.0, 1.0, 1), InvalidArgument);
}

TEST_CASE("trapezoid rule is exact for linear functions", "[grid]") {
  const std::vector<double> g{0.0, 0.5, 2.0, 3.0};
  std::vector<double> v;
  for (double x : g) v.push_back(3.0 * x + 1.0);
  // integral of 3x+1 over [0,3] is 13.5 + 3 = 16.5
  REQUIRE(std::abs(trapezoid_integral(g, v) - 16.5) <= 1e-14);
  const std::vector<double> w = trapezoid_weights(g);
  REQUIRE(w.size() == 4);
  REQUIRE(std::abs(w[0] - 0.25) <= 1e-16);
  REQUIRE(std::abs(w[1] - 1.0) <= 1e-16);
  REQUIRE(std::abs(w[2] - 1.25) <= 1e-16);
  REQUIRE(std::abs(w[3] - 0.5) <= 1e-16);
  double tot = 0.0;
  for (double x : w) tot += x;
  REQUIRE(std::abs(tot - 3.0) <= 1e-14);
}

TEST_CASE("hellinger distance is zero iff densities coincide", "[grid]") {
  const std::vector<double> grid = make_uniform_grid(0.0, 1.0, 101);
  std::vector<double> p(grid.size(), 1.0);
  GridFunction gp(grid, p);
  REQUIRE(hellinger_distance(gp, gp) == 0.0);
  std::vector<double> q(grid.size(), 1.0);
  q[50] = 1.5;
  REQUIRE(hellinger_distance(gp, GridFunction(grid, q)) > 0.0);
}

TEST_CASE("hellinger distance between disjoint densities is sqrt(2)", "[grid]") {
  // two unit-mass triangle bumps with disjoint support on a shared grid;
  // piecewise-linear integrands make the trapezoid rule exact here
  const std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  const std::vector<double> p{0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  const std::vector<double> q{0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0};
  const double d = hellinger_distance(GridFunction(grid, p), GridFunction(grid, q));
  // sqrt(p)+sqrt(q) is not piecewise linear, so allow a modest quadrature error
  REQUIRE(std::abs(d - std::sqrt(2.0)) <= 0.05);

  // refining the grid tightens it
  const std::vector<double> fine = make_uniform_grid(0.0, 3.0, 6001);
  std::vector<double> pf, qf;
  GridFunction gp(grid, p), gq(grid, q);
  for (double x : fine) {
    pf.push_back(gp(x));
    qf.push_back(gq(x));
  }
  const double df = hellinger_distance(GridFunction(fine, pf), GridFunction(fine, qf));
  REQUIRE(std::abs(df - std::sqrt(2.0)) <= 1e-3);
}

TEST_CASE("hellinger distance between unit Laplace and its shift has a closed form",
          "[grid]") {
  // densities of Laplace(0,1) and Laplace(1,1) tabulated on a wide fine grid;
  // the squared distance is 2 - 3 exp(-1/2) in closed form
  const NoiseKernel lap = NoiseKernel::laplace(1.0);
  const std::vector<double> grid = make_uniform_grid(-40.0, 41.0, 65537);
  std::vector<double> p, q;
  for (double x : grid) {
    p.push_back(lap.density(x));
    q.push_back(lap.density(x - 1.0));
  }
  const double d = hellinger_distance(GridFunction(grid, p), GridFunction(grid, q));
  REQUIRE(std::abs(d - 0.42474465371808945) <= 1e-6);
}

TEST_CASE("hellinger distance is symmetric and rejects negative densities", "[grid]") {
  const std::vector<double> grid = make_uniform_grid(0.0, 1.0, 33);
  std::vector<double> p(grid.size(), 1.0), q(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) q[i] = 2.0 * grid[i];
  GridFunction gp(grid, p), gq(grid, q);
  REQUIRE(hellinger_distance(gp, gq) == hellinger_distance(gq, gp));
  std::vector<double> neg(grid.size(), 1.0);
  neg[3] = -0.5;
  REQUIRE_THROWS_AS(hellinger_distance(gp, GridFunction(grid, neg)), InvalidArgument);
}

TEST_CASE("wasserstein distance between aligned uniform cdfs is the shift", "[grid]") {
  // F uniform on [0,1], G uniform on [0.5,1.5]; |F-G| is piecewise linear on
  // a grid containing all four kinks, so the trapezoid value is exact
  const std::vector<double> grid = make_uniform_grid(0.0, 1.5, 7);
  std::vector<double> F, G;
  for (double x : grid) {
    F.push_back(std::min(1.0, std::max(0.0, x)));
    G.push_back(std::min(1.0, std::max(0.0, x - 0.5)));
  }
  const double w = wasserstein1_distance(GridFunction(grid, F), GridFunction(grid, G));
  REQUIRE(std::abs(w - 0.5) <= 1e-14);
  REQUIRE(wasserstein1_distance(GridFunction(grid, F), GridFunction(grid, F)) == 0.0);
}

TEST_CASE("wasserstein distance between step cdfs counts the gap", "[grid]") {
  // point mass at 0 versus point mass at 1, cdfs tabulated on a fine grid
  const std::vector<double> grid = make_uniform_grid(-0.5, 1.5, 2001);
  std::vector<double> F, G;
  for (double x : grid) {
    F.push_back(x >= 0.0 ? 1.0 : 0.0);
    G.push_back(x >= 1.0 ? 1.0 : 0.0);
  }
  const double w = wasserstein1_distance(GridFunction(grid, F), GridFunction(grid, G));
  REQUIRE(std::abs(w - 1.0) <= 2e-3);  // off by at most one cell width
}

TEST_CASE("wasserstein distance rejects non-cdf inputs", "[grid]") {
  const std::vector<double> grid = make_uniform_grid(0.0, 1.0, 11);
  std::vector<double> ok(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) ok[i] = grid[i];
  GridFunction F(grid, ok);
  std::vector<double> dec = ok;
  std::swap(dec[4], dec[7]);  // breaks monotonicity
  REQUIRE_THROWS_AS(wasserstein1_distance(F, GridFunction(grid, dec)), NotACdf);
  std::vector<double> big = ok;
  big[9] = 1.2;  // exceeds one
  REQUIRE_THROWS_AS(wasserstein1_distance(F, GridFunction(grid, big)), NotACdf);
  std::vector<double> negv = ok;
  negv[0] = -0.2;
  REQUIRE_THROWS_AS(wasserstein1_distance(F, GridFunction(grid, negv)), NotACdf);
}
